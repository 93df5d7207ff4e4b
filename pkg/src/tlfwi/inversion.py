"""The four inversion drivers and their shared iteration loop.

All methods minimize the same trace misfit. They differ only in how the
material field is parameterized: directly by its nodal values, or as the
output of a network whose weights receive the adjoint gradient through
backpropagation.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import adjoint, wave
from .errors import CheckpointMismatch, ShapeMismatch
from .nn import Adam, Network, PolynomialDecay, generator, init_weights, noise_input, unet
from .wave import ShotRecord, Survey

log = logging.getLogger(__name__)

METHODS = ("conventional", "nn_based", "conventional_with_init", "transfer")
SNAPSHOT_ITERATIONS = (1, 5, 10, 15, 20, 25, 30, 35)
GAMMA_BOUNDS = (wave.VOID, 2.0)
# network outputs are floored here before entering the solver
GAMMA_FLOOR = 1e-8


@dataclass(frozen=True)
class InversionConfig:
    method: str
    lr: float
    clip: float | None
    cost_scale: float
    iterations: int = 35
    seed: int = 0
    schedule: PolynomialDecay = PolynomialDecay()
    snapshots: tuple[int, ...] = SNAPSHOT_ITERATIONS

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.iterations < 1:
            raise ValueError("iteration budget must be >= 1")
        if not self.cost_scale > 0:
            raise ValueError("cost scale must be positive")

    @classmethod
    def for_method(cls, method: str, profile: str = "desk", **overrides) -> "InversionConfig":
        """Defaults for ``method`` from a named configuration profile."""
        from .config import ExperimentConfig, inversion_config

        return inversion_config(ExperimentConfig.profile(profile), method, **overrides)


@dataclass
class IterationMetrics:
    iteration: int
    cost_scaled: float
    cost_raw: float
    mse: float
    wall_ms: float


@dataclass
class InversionRun:
    config: InversionConfig
    metrics: list[IterationMetrics] = field(default_factory=list)
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    final: np.ndarray | None = None

    @property
    def costs(self) -> np.ndarray:
        return np.array([m.cost_raw for m in self.metrics])

    @property
    def mses(self) -> np.ndarray:
        return np.array([m.mse for m in self.metrics])


def mse_to_truth(pred: np.ndarray, truth: np.ndarray) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ShapeMismatch(f"field shapes {pred.shape} vs {truth.shape}")
    return float(np.mean((pred - truth) ** 2))


def first_iteration_gradient(obs: Sequence[ShotRecord], survey: Survey) -> np.ndarray:
    """Misfit gradient at the intact plate, gamma = 1 everywhere."""
    _, g, _ = adjoint.misfit_and_gradient(np.ones(survey.grid.shape), survey, obs)
    return g


# ---------------------------------------------------------------------------
# parameterizations

class _DirectField:
    """gamma itself is the parameter vector, clamped after every step."""

    def __init__(self, init: np.ndarray):
        self.shape = init.shape
        self.theta = np.clip(np.asarray(init, dtype=np.float64), *GAMMA_BOUNDS).ravel().copy()

    def field(self) -> np.ndarray:
        return self.theta.reshape(self.shape).copy()

    def pullback(self, g: np.ndarray) -> np.ndarray:
        return g.ravel().copy()

    def project(self):
        np.clip(self.theta, *GAMMA_BOUNDS, out=self.theta)


class _NetworkField:
    """gamma is the network output for a fixed input."""

    def __init__(self, net: Network, x: np.ndarray, train: bool):
        self.net, self.x, self.train = net, x, train
        self.theta = net.theta
        self._raw = None

    def field(self) -> np.ndarray:
        self._raw = self.net.forward(self.x, train=self.train)[0, 0]
        return np.maximum(self._raw, GAMMA_FLOOR)

    def pullback(self, g: np.ndarray) -> np.ndarray:
        g = np.where(self._raw > GAMMA_FLOOR, g, 0.0)
        self.net.zero_grad()
        self.net.backward(g[None, None])
        return self.net.grad.copy()

    def project(self):
        pass


def _run(param, obs, survey: Survey, cfg: InversionConfig, truth=None) -> InversionRun:
    run = InversionRun(cfg)
    opt = Adam(param.theta.size, cfg.lr, cfg.clip, cfg.schedule)
    for k in range(cfg.iterations):
        i = k + 1
        t0 = time.perf_counter()
        gamma = param.field()
        last = i == cfg.iterations
        if last:
            records, _ = wave.simulate_survey(gamma, survey)
            cost = adjoint.misfit(records, obs)
        else:
            cost, g, _ = adjoint.misfit_and_gradient(gamma, survey, obs)
            dtheta = param.pullback(g * cfg.cost_scale)
            opt.step(param.theta, dtheta, epoch=k)
            param.project()
        mse = mse_to_truth(gamma, truth) if truth is not None else float("nan")
        wall = (time.perf_counter() - t0) * 1e3
        run.metrics.append(IterationMetrics(i, cost * cfg.cost_scale, cost, mse, wall))
        if i in cfg.snapshots:
            run.snapshots[i] = gamma
        if last:
            run.final = gamma
        log.debug("%s it %d cost %.4e mse %.4e", cfg.method, i, cost, mse)
    return run


# ---------------------------------------------------------------------------
# drivers

def run_conventional(obs, survey: Survey, cfg: InversionConfig, init=None, truth=None) -> InversionRun:
    init = np.ones(survey.grid.shape) if init is None else init
    if np.shape(init) != survey.grid.shape:
        raise ShapeMismatch(f"initial field {np.shape(init)} vs grid {survey.grid.shape}")
    return _run(_DirectField(init), obs, survey, cfg, truth)


def generator_for(grid_shape, seed: int, widths=(128, 64, 64, 32, 32)) -> tuple[Network, np.ndarray]:
    """Freshly initialized generator and its fixed noise input."""
    net = generator(grid_shape, widths=widths)
    init_weights(net, seed)
    return net, noise_input(net.input_shape, seed + 1)


def run_nn_based(obs, survey: Survey, cfg: InversionConfig, truth=None,
                 net: Network | None = None, noise: np.ndarray | None = None) -> InversionRun:
    if net is None:
        net, noise = generator_for(survey.grid.shape, cfg.seed)
    elif noise is None:
        noise = noise_input(net.input_shape, cfg.seed + 1)
    return _run(_NetworkField(net, noise, train=True), obs, survey, cfg, truth)


def _check_unet(net: Network, survey: Survey):
    if net.kind != "unet" or net.input_shape != (1,) + survey.grid.shape:
        raise CheckpointMismatch(f"{net.kind} network with input {net.input_shape} "
                                 f"does not fit grid {survey.grid.shape}")


def transfer_input(obs, survey: Survey, g0: np.ndarray | None = None) -> np.ndarray:
    from .scenarios import normalize_max_abs

    if g0 is None:
        g0 = first_iteration_gradient(obs, survey)
    return normalize_max_abs(g0)[None, None]


def run_transfer(obs, survey: Survey, pretrained: Network, cfg: InversionConfig, truth=None,
                 g0: np.ndarray | None = None) -> InversionRun:
    """Fine-tune a copy of the pretrained U-Net on this observation.

    Batch norm stays in eval mode so the stored running statistics are used.
    """
    _check_unet(pretrained, survey)
    net = clone(pretrained)
    return _run(_NetworkField(net, transfer_input(obs, survey, g0), train=False),
                obs, survey, cfg, truth)


def run_conventional_with_init(obs, survey: Survey, pretrained: Network, cfg: InversionConfig,
                               truth=None, g0: np.ndarray | None = None) -> InversionRun:
    _check_unet(pretrained, survey)
    init = pretrained.predict(transfer_input(obs, survey, g0))[0, 0]
    return _run(_DirectField(np.maximum(init, GAMMA_FLOOR)), obs, survey, cfg, truth)


def clone(net: Network) -> Network:
    """Independent copy of ``net`` (parameters and batch-norm statistics)."""
    builder = {"unet": unet, "generator": generator}[net.kind]
    kwargs = getattr(net, "build_args", {})
    copy = builder(**kwargs)
    for dst, src in zip(copy.tensors(), net.tensors()):
        dst[...] = src
    return copy


def corrupt(net: Network, strength: float, seed: int) -> Network:
    """Copy of ``net`` with every conv weight perturbed by ``strength`` times its own spread.

    Used to emulate a badly pretrained network whose initial guess is wrong.
    """
    from .nn.layers import Conv2d

    bad = clone(net)
    rng = np.random.default_rng(seed)
    for layer in bad.layers:
        if isinstance(layer, Conv2d):
            w = layer.params[0]
            w += strength * w.std() * rng.standard_normal(w.shape)
    return bad


def run_method(method: str, obs, survey: Survey, cfg: InversionConfig, truth=None,
               pretrained: Network | None = None, g0=None) -> InversionRun:
    if method == "conventional":
        return run_conventional(obs, survey, cfg, truth=truth)
    if method == "nn_based":
        return run_nn_based(obs, survey, cfg, truth=truth)
    if pretrained is None:
        raise CheckpointMismatch(f"method {method!r} needs a pretrained U-Net")
    if method == "transfer":
        return run_transfer(obs, survey, pretrained, cfg, truth, g0)
    return run_conventional_with_init(obs, survey, pretrained, cfg, truth, g0)
