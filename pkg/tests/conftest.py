"""Session fixtures for the desk-scale experiments.

The dataset, the pretrained checkpoint and the method comparison are
expensive, so they are computed once and kept in the pytest cache
(``pytest --cache-clear`` forces a rebuild).
"""
import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tlfwi import commands, config, formats, pretrain, scenarios  # noqa: E402

DESK = config.ExperimentConfig.profile("desk")
N_TRAIN, N_HELDOUT = 50, 10
COMPARE_METHODS = ("conventional", "nn_based", "conventional_with_init", "transfer")
CACHE_TAG = "v3"


@pytest.fixture(scope="session")
def cache_dir(request) -> Path:
    return Path(request.config.cache.mkdir(f"tlfwi-{CACHE_TAG}"))


@pytest.fixture(scope="session")
def desk_dataset(cache_dir):
    """50 training records followed by 10 held-out ones (seeds data_seed + i)."""
    path = cache_dir / "dataset.fwid"
    if not path.exists():
        coarse = config.survey(DESK)
        fine = scenarios.fine_survey_for(coarse, DESK.fine_factor)
        records = [scenarios.make_record(DESK.data_seed + i, coarse, fine)
                   for i in range(N_TRAIN + N_HELDOUT)]
        formats.write_dataset(path, records, scenarios.NORM_MAX_ABS)
    records, _ = formats.read_dataset(path, expect_norm=scenarios.NORM_MAX_ABS)
    assert [r.seed for r in records] == [DESK.data_seed + i for i in range(N_TRAIN + N_HELDOUT)]
    return records


@pytest.fixture(scope="session")
def pretrained(cache_dir, desk_dataset):
    """U-Net trained on the first 50 records with the desk schedule."""
    path = cache_dir / "checkpoint.fwic"
    if not path.exists():
        net, logs, _ = pretrain.train_unet(desk_dataset[:N_TRAIN], config.train_config(DESK))
        pretrain.write_log(cache_dir / "train_log.csv", logs)
        pretrain.save_checkpoint(path, net, DESK.seed, DESK.epochs)
    net, _, _ = pretrain.load_checkpoint(path, (DESK.nx, DESK.ny))
    return net, path


@pytest.fixture(scope="session")
def desk_comparison(cache_dir, pretrained):
    """All four methods on 10 sampled single-ellipse cases, 35 iterations."""
    path = cache_dir / "comparison.json"
    if not path.exists():
        results = commands.compare(DESK, 10, COMPARE_METHODS, checkpoint=str(pretrained[1]))
        blob = [{"seed": seed, "status": status,
                 "runs": {m: [list(map(float, c)), list(map(float, e))] for m, (c, e) in res.items()}}
                for seed, status, res in results]
        path.write_text(json.dumps(blob))
    blob = json.loads(path.read_text())
    out = {}
    for m in COMPARE_METHODS:
        runs = [case["runs"][m] for case in blob if case["status"] == "ok"]
        out[m] = {"costs": np.array([r[0] for r in runs]), "mses": np.array([r[1] for r in runs])}
    return out


# -- acceptance report ---------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """``record(n, ok, detail)`` stores a verdict and then asserts it."""
    def record(n: int, ok: bool, detail: str):
        ACCEPTANCE[n] = (bool(ok), detail)
        assert ok, f"criterion {n}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
