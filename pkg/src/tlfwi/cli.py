"""tlfwi command line: data generation, pretraining, inversions, comparisons, sweeps, rendering.

Exit codes: 0 ok, 2 configuration or input-format error, 3 solver failure,
4 missing artifact (dataset or checkpoint).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_MISSING = 0, 2, 3, 4

CLI_METHODS = {"conventional": "conventional", "nn": "nn_based",
               "conv_init": "conventional_with_init", "transfer": "transfer"}

log = logging.getLogger("tlfwi")


class ArtifactMissing(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tlfwi", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key = value file applied on top of the profile")
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded BLAS and zeroed timing columns, for byte-identical outputs")
    p.add_argument("--threads", type=int, default=1, help="worker processes for cases/samples")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-data", help="build a pretraining dataset")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--out", required=True, help="output directory")

    t = sub.add_parser("pretrain", help="train the U-Net on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int)
    t.add_argument("--samples", type=int, help="use only the first N records")

    i = sub.add_parser("invert", help="run one inversion")
    i.add_argument("--method", choices=sorted(CLI_METHODS), required=True)
    i.add_argument("--case", default="case1", help="case1..case4, or an integer scenario seed")
    i.add_argument("--iters", type=int)
    i.add_argument("--checkpoint")
    i.add_argument("--out", required=True)

    c = sub.add_parser("compare", help="all methods over sampled single-ellipse cases")
    c.add_argument("--cases", type=int, default=10)
    c.add_argument("--methods", nargs="+", choices=sorted(CLI_METHODS), default=sorted(CLI_METHODS))
    c.add_argument("--iters", type=int)
    c.add_argument("--checkpoint")
    c.add_argument("--out", required=True)

    s = sub.add_parser("sweep", help="pretraining epochs or sample count versus transfer MSE")
    s.add_argument("--axis", choices=("epochs", "samples"), required=True)
    s.add_argument("--values", type=int, nargs="+", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--cases", type=int, default=3)
    s.add_argument("--iters", type=int)
    s.add_argument("--out", required=True)

    r = sub.add_parser("render", help="FWIF field to PGM (or ASCII)")
    r.add_argument("field")
    r.add_argument("--out", help="PGM path; omitted means ASCII to stdout")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # BLAS threads must be fixed before numpy loads
    n_blas = "1" if args.deterministic else str(max(1, args.threads))
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, n_blas)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    from . import commands
    from .errors import CheckpointMismatch, ConfigError, FormatError, FWIError, NormalizationMismatch

    try:
        cfg = commands.load_config(args)
        return commands.dispatch(args, cfg)
    except ArtifactMissing as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, FormatError, CheckpointMismatch, NormalizationMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FWIError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def require(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise ArtifactMissing(f"missing artifact {path}")
    return path


if __name__ == "__main__":
    sys.exit(main())
