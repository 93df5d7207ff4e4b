"""Implementations behind the command-line subcommands."""
from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import formats, inversion, pretrain, scenarios
from .cli import CLI_METHODS, EXIT_OK, EXIT_SOLVER, ArtifactMissing, require
from .config import ExperimentConfig
from .errors import ConfigError, FWIError

log = logging.getLogger(__name__)


def load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = config_mod.load(args.config, args.profile)
    else:
        cfg = ExperimentConfig.profile(args.profile).validate()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be non-negative")
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg


def dispatch(args, cfg: ExperimentConfig) -> int:
    handler = {"generate-data": cmd_generate_data, "pretrain": cmd_pretrain, "invert": cmd_invert,
               "compare": cmd_compare, "sweep": cmd_sweep, "render": cmd_render}[args.command]
    return handler(args, cfg)


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pool(threads: int):
    return ProcessPoolExecutor(max_workers=threads) if threads > 1 else None


def _map(fn, items, threads: int):
    pool = _pool(threads)
    if pool is None:
        return [fn(item) for item in items]
    with pool:
        return list(pool.map(fn, items))


# -- generate-data -------------------------------------------------------------

def _sample(job):
    cfg, seed = job
    coarse = config_mod.survey(cfg)
    try:
        return scenarios.make_record(seed, coarse, scenarios.fine_survey_for(coarse, cfg.fine_factor))
    except FWIError as exc:
        log.warning("skipping sample seed=%d: %s", seed, exc)
        return None


def cmd_generate_data(args, cfg) -> int:
    if args.n < 1:
        raise ConfigError("--n must be >= 1")
    out = _outdir(args.out)
    seed0 = cfg.data_seed + cfg.seed
    records = [r for r in _map(_sample, [(cfg, seed0 + i) for i in range(args.n)], args.threads) if r]
    if not records:
        print("every sample failed", flush=True)
        return EXIT_SOLVER
    formats.write_dataset(out / "dataset.fwid", records, scenarios.NORM_MAX_ABS)
    with open(out / "manifest.txt", "w") as fh:
        for r in records:
            fh.write(f"{r.seed}\t{r.description}\n")
    print(f"wrote {len(records)} records to {out / 'dataset.fwid'}")
    return EXIT_OK


# -- pretrain ------------------------------------------------------------------

def _load_records(path, grid_shape, limit=None):
    records, _ = formats.read_dataset(require(path), expect_norm=scenarios.NORM_MAX_ABS)
    if records and records[0].input.shape != tuple(grid_shape):
        raise ConfigError(f"dataset fields {records[0].input.shape} do not match grid {tuple(grid_shape)}")
    return records[:limit] if limit else records


def cmd_pretrain(args, cfg) -> int:
    out = _outdir(args.out)
    records = _load_records(args.data, (cfg.nx, cfg.ny), args.samples or cfg.samples)
    tcfg = config_mod.train_config(cfg, **({"epochs": args.epochs} if args.epochs is not None else {}))
    net, logs, _ = pretrain.train_unet(records, tcfg)
    pretrain.save_checkpoint(out / "checkpoint.fwic", net, cfg.seed, tcfg.epochs)
    pretrain.write_log(out / "train_log.csv", logs)
    if logs:
        print(f"final train_mse {logs[-1].train_mse:.6g} val_mse {logs[-1].val_mse:.6g}")
    return EXIT_OK


# -- invert --------------------------------------------------------------------

def parse_case(name: str, cfg):
    if name.startswith("case"):
        try:
            return scenarios.case_scenario(name)
        except KeyError as exc:
            raise ConfigError(str(exc)) from None
    try:
        seed = int(name)
    except ValueError:
        raise ConfigError(f"--case must be case1..case4 or an integer seed, got {name!r}") from None
    return scenarios.sample_scenario(np.random.default_rng(seed), cfg.Lx, cfg.Ly)


def _checkpoint(path, cfg):
    if path is None:
        raise ArtifactMissing("this method needs --checkpoint")
    net, _, _ = pretrain.load_checkpoint(require(path), (cfg.nx, cfg.ny))
    return net


def _problem(cfg, scenario):
    coarse = config_mod.survey(cfg)
    fine = scenarios.fine_survey_for(coarse, cfg.fine_factor)
    truth = scenarios.rasterize(scenario, coarse.grid)
    obs = scenarios.generate_observation(scenario, fine, coarse, cfg.fine_factor)
    return coarse, truth, obs


def cmd_invert(args, cfg) -> int:
    method = CLI_METHODS[args.method]
    net = _checkpoint(args.checkpoint, cfg) if method in ("transfer", "conventional_with_init") else None
    out = _outdir(args.out)
    survey, truth, obs = _problem(cfg, parse_case(args.case, cfg))
    icfg = config_mod.inversion_config(cfg, method, **({"iterations": args.iters} if args.iters else {}))
    run = inversion.run_method(method, obs, survey, icfg, truth, net)
    formats.write_metrics(out / "metrics.csv", run.metrics, include_wall=not args.deterministic)
    for i, field in sorted(run.snapshots.items()):
        formats.write_field(out / f"snapshot_{i:03d}.fwif", field)
        formats.write_pgm(out / f"snapshot_{i:03d}.pgm", field)
    formats.write_field(out / "final.fwif", run.final)
    formats.write_field(out / "truth.fwif", truth)
    (out / "config.txt").write_text(cfg.dumps())
    m = run.metrics
    print(f"{method}: cost {m[0].cost_raw:.4g} -> {m[-1].cost_raw:.4g}, mse {m[0].mse:.4g} -> {m[-1].mse:.4g}")
    return EXIT_OK


# -- compare -------------------------------------------------------------------

def run_case(job):
    """All requested methods on one sampled scenario; returns per-method results."""
    cfg, case_seed, methods, iters, ckpt = job
    scenario = scenarios.sample_scenario(np.random.default_rng(case_seed), cfg.Lx, cfg.Ly)
    try:
        survey, truth, obs = _problem(cfg, scenario)
        net = None
        g0 = None
        if any(m in ("transfer", "conventional_with_init") for m in methods):
            net = pretrain.load_checkpoint(ckpt, (cfg.nx, cfg.ny))[0]
            g0 = inversion.first_iteration_gradient(obs, survey)
        results = {}
        for method in methods:
            icfg = config_mod.inversion_config(cfg, method, **({"iterations": iters} if iters else {}))
            run = inversion.run_method(method, obs, survey, icfg, truth, net, g0)
            results[method] = (run.costs, run.mses)
        return case_seed, "ok", results
    except FWIError as exc:
        return case_seed, f"failed: {exc}", {}


def compare(cfg, n_cases, methods, iters=None, checkpoint=None, threads=1):
    jobs = [(cfg, cfg.test_seed + k, tuple(methods), iters, checkpoint) for k in range(n_cases)]
    return _map(run_case, jobs, threads)


def aggregate(results, methods):
    """Per method and iteration: mean log10 cost, mean log10 MSE and mean MSE."""
    rows = []
    for method in methods:
        runs = [res[method] for _, status, res in results if status == "ok"]
        if not runs:
            continue
        costs = np.array([c for c, _ in runs])
        mses = np.array([m for _, m in runs])
        tiny = np.finfo(float).tiny
        lc = np.log10(np.maximum(costs, tiny)).mean(axis=0)
        lm = np.log10(np.maximum(mses, tiny)).mean(axis=0)
        mm = mses.mean(axis=0)
        for i in range(costs.shape[1]):
            rows.append((method, i + 1, lc[i], lm[i], mm[i]))
    return rows


def cmd_compare(args, cfg) -> int:
    methods = [CLI_METHODS[m] for m in args.methods]
    ckpt = None
    if any(m in ("transfer", "conventional_with_init") for m in methods):
        if args.checkpoint is None:
            raise ArtifactMissing("transfer and conv_init need --checkpoint")
        ckpt = str(require(args.checkpoint))
        _checkpoint(ckpt, cfg)
    out = _outdir(args.out)
    results = compare(cfg, args.cases, methods, args.iters, ckpt, args.threads)
    formats.write_csv(out / "aggregate.csv",
                      ("method", "iteration", "mean_log_cost", "mean_log_mse", "mean_mse"),
                      aggregate(results, methods))
    finals = []
    for seed, status, res in results:
        for method in methods:
            if method in res:
                costs, mses = res[method]
                finals.append((seed, method, status, costs[-1], mses[0], mses[-1]))
            else:
                finals.append((seed, method, status, "", "", ""))
    formats.write_csv(out / "finals.csv",
                      ("case_seed", "method", "status", "final_cost", "initial_mse", "final_mse"), finals)
    failed = [s for s, status, _ in results if status != "ok"]
    for seed, status, _ in results:
        if status != "ok":
            print(f"case {seed}: {status}")
    print(f"{len(results) - len(failed)}/{len(results)} cases ok")
    return EXIT_SOLVER if len(failed) == len(results) else EXIT_OK


# -- sweep ---------------------------------------------------------------------

def cmd_sweep(args, cfg) -> int:
    out = _outdir(args.out)
    all_records = _load_records(args.data, (cfg.nx, cfg.ny))
    rows = []
    for value in args.values:
        if value < (0 if args.axis == "epochs" else 1):
            raise ConfigError(f"invalid sweep value {value}")
        if args.axis == "epochs":
            records, tcfg = all_records[:cfg.samples], config_mod.train_config(cfg, epochs=value)
        else:
            records, tcfg = all_records[:value], config_mod.train_config(cfg)
        net, _, _ = pretrain.train_unet(records, tcfg)
        ckpt = out / f"checkpoint_{args.axis}_{value}.fwic"
        pretrain.save_checkpoint(ckpt, net, cfg.seed, tcfg.epochs)
        results = compare(cfg, args.cases, ["transfer"], args.iters, str(ckpt), args.threads)
        for method, it, _, _, mean_mse in aggregate(results, ["transfer"]):
            rows.append((args.axis, value, it, mean_mse))
    formats.write_csv(out / "sweep.csv", ("axis", "value", "iteration", "mean_mse"), rows)
    return EXIT_OK


# -- render --------------------------------------------------------------------

ASCII_RAMP = " .:-=+*#%@"


def ascii_render(field, width: int = 64) -> str:
    step = max(1, int(np.ceil(field.shape[0] / width)))
    f = np.clip(field[::step, ::step], 0.0, 1.0)
    idx = np.rint(f * (len(ASCII_RAMP) - 1)).astype(int)
    return "\n".join("".join(ASCII_RAMP[v] for v in idx[:, j]) for j in range(idx.shape[1]))


def cmd_render(args, cfg) -> int:
    field = formats.read_field(require(args.field))
    if args.out:
        formats.write_pgm(args.out, field)
    else:
        print(ascii_render(field))
    return EXIT_OK
