"""Supervised U-Net training from first-iteration gradients to true fields."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import formats
from .errors import CheckpointMismatch, EmptyDataset, NormalizationMismatch, ShapeMismatch
from .nn import Network, PolynomialDecay, RMSprop, init_weights, unet
from .scenarios import NORM_MAX_ABS

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 80
    lr: float = 8e-4
    clip: float | None = 5e-5
    schedule: PolynomialDecay = PolynomialDecay()
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("validation fraction must be in [0, 1)")


@dataclass
class EpochLog:
    epoch: int
    train_mse: float
    val_mse: float
    lr_factor: float


def split_indices(n: int, val_fraction: float, seed: int):
    """Seeded shuffle, then the first ``ceil(val_fraction*n)`` indices validate."""
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(np.ceil(val_fraction * n)) if val_fraction > 0 else 0
    if n_val >= n:
        n_val = n - 1
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def _stack(records, idx):
    x = np.stack([records[i].input for i in idx])[:, None]
    y = np.stack([records[i].target for i in idx])[:, None]
    return x, y


def evaluate(net: Network, records, idx=None, batch: int = 10) -> np.ndarray:
    """Per-sample MSE of eval-mode predictions."""
    idx = range(len(records)) if idx is None else idx
    idx = list(idx)
    out = []
    for k in range(0, len(idx), batch):
        x, y = _stack(records, idx[k:k + batch])
        pred = net.predict(x)
        out.extend(np.mean((pred - y) ** 2, axis=(1, 2, 3)))
    return np.array(out)


def train_unet(records: Sequence, cfg: TrainConfig, net: Network | None = None,
               on_epoch=None):
    """Train a U-Net; returns (net, epoch logs, (train_idx, val_idx)).

    Batches are drawn from a per-epoch shuffle seeded by ``cfg.seed``. The
    reported ``train_mse`` is the sample-weighted mean of the batch losses
    seen during the epoch; ``val_mse`` comes from eval-mode predictions.
    """
    if not records:
        raise EmptyDataset("no training records")
    shape = records[0].input.shape
    if net is None:
        net = unet(shape)
        init_weights(net, cfg.seed)
    if net.input_shape != (1,) + shape:
        raise ShapeMismatch(f"records of shape {shape} do not fit U-Net input {net.input_shape}")
    train_idx, val_idx = split_indices(len(records), cfg.val_fraction, cfg.seed)
    assert not set(train_idx) & set(val_idx)
    batch = min(cfg.batch_size, len(train_idx))
    opt = RMSprop(net.n_params, cfg.lr, cfg.clip, cfg.schedule)
    rng = np.random.default_rng(cfg.seed + 1)
    logs = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(train_idx)
        total, seen = 0.0, 0
        for k in range(0, len(order), batch):
            x, y = _stack(records, order[k:k + batch])
            pred = net.forward(x, train=True)
            diff = pred - y
            loss = float(np.mean(diff**2))
            net.zero_grad()
            net.backward(2.0 * diff / diff.size)
            opt.step(net.theta, net.grad, epoch)
            total += loss * len(x)
            seen += len(x)
        val = float(np.mean(evaluate(net, records, val_idx))) if len(val_idx) else float("nan")
        entry = EpochLog(epoch + 1, total / seen, val, cfg.schedule(epoch))
        logs.append(entry)
        log.info("epoch %d train %.5f val %.5f", entry.epoch, entry.train_mse, entry.val_mse)
        if on_epoch is not None:
            on_epoch(entry, net)
    return net, logs, (train_idx, val_idx)


def write_log(path, logs: Sequence[EpochLog]):
    formats.write_csv(path, formats.TRAIN_LOG_HEADER,
                      [(e.epoch, e.train_mse, e.val_mse, e.lr_factor) for e in logs])


def save_checkpoint(path, net: Network, seed: int, epoch: int):
    formats.write_checkpoint(path, net.tensors(), seed, epoch)


def load_checkpoint(path, grid_shape, widths=(16, 32, 64, 128)) -> tuple[Network, int, int]:
    """Rebuild a U-Net for ``grid_shape`` and fill it from an FWIC file."""
    tensors, seed, epoch = formats.read_checkpoint(path)
    net = unet(tuple(grid_shape), widths=tuple(widths))
    targets = net.tensors()
    if len(tensors) != len(targets) or any(a.shape != b.shape for a, b in zip(tensors, targets)):
        raise CheckpointMismatch(f"checkpoint {path} does not match the U-Net for grid {grid_shape}")
    for dst, src in zip(targets, tensors):
        dst[...] = src
    return net, seed, epoch


def predict_initial(net: Network, g0: np.ndarray, norm_id: int = NORM_MAX_ABS,
                    expected_norm: int = NORM_MAX_ABS) -> np.ndarray:
    """Eval-mode prediction for an already normalized gradient."""
    if norm_id != expected_norm:
        raise NormalizationMismatch(f"input normalization {norm_id}, network expects {expected_norm}")
    g0 = np.asarray(g0, dtype=np.float64)
    if net.input_shape != (1,) + g0.shape:
        raise CheckpointMismatch(f"gradient {g0.shape} does not fit network input {net.input_shape}")
    return net.predict(g0[None, None])[0, 0]
