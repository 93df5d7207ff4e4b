"""Plain-text ``key = value`` experiment configuration with two built-in profiles."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

PROFILES = ("desk", "paper")


@dataclass
class ExperimentConfig:
    # physics
    rho0: float = 2700.0
    c0: float = 6000.0
    kc: float = 5e5
    nc: int = 2
    A0: float = 1.0
    Lx: float = 0.1
    Ly: float = 0.05
    # inversion grid; dt = 0 means "derive from courant"
    nx: int = 128
    ny: int = 64
    nt: int = 500
    dt: float = 0.0
    courant: float = 0.6
    fine_factor: int = 2
    # acquisition on the top edge
    n_sources: int = 4
    source_spacing: int = 18
    n_receivers: int = 24
    receiver_spacing: int = 3
    # inversion
    iterations: int = 35
    schedule_alpha: float = -0.5
    schedule_beta: float = 0.2
    conventional_lr: float = 8e-2
    conventional_clip: float = 1e-7
    conventional_cost_scale: float = 1e30
    nn_lr: float = 3e-4
    nn_clip: float = 0.0
    nn_cost_scale: float = 1e27
    conv_init_lr: float = 8e-2
    conv_init_clip: float = 1e-7
    conv_init_cost_scale: float = 1e30
    transfer_lr: float = 2e-4
    transfer_clip: float = 1e-5
    transfer_cost_scale: float = 1e26
    # pretraining
    samples: int = 50
    epochs: int = 100
    batch_size: int = 10
    pretrain_lr: float = 8e-4
    pretrain_clip: float = 5e-5
    val_fraction: float = 0.1
    # bookkeeping
    seed: int = 0
    data_seed: int = 1000
    test_seed: int = 5000
    out_dir: str = "runs"

    @classmethod
    def profile(cls, name: str) -> "ExperimentConfig":
        if name == "desk":
            return cls()
        if name == "paper":
            return cls(nx=256, ny=128, nt=2160, source_spacing=36, receiver_spacing=6,
                       conventional_lr=8e-2, conventional_clip=1e-5, conventional_cost_scale=1e12,
                       nn_lr=5e-4, nn_clip=5e-5, nn_cost_scale=1e8,
                       conv_init_lr=5e-2, conv_init_clip=1e-5, conv_init_cost_scale=1e12,
                       transfer_lr=5e-4, transfer_clip=1e-5, transfer_cost_scale=1e10,
                       samples=800, batch_size=80)
        raise ConfigError(f"unknown profile {name!r}; choose from {PROFILES}")

    def validate(self) -> "ExperimentConfig":
        positive = ["rho0", "c0", "kc", "Lx", "Ly", "courant", "iterations", "epochs",
                    "batch_size", "samples", "fine_factor", "n_sources", "n_receivers"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.nc < 1 or self.A0 < 0:
            raise ConfigError("need nc >= 1 and A0 >= 0")
        if self.nx < 3 or self.ny < 3 or self.nt < 1 or self.dt < 0:
            raise ConfigError("grid needs nx, ny >= 3, nt >= 1 and dt >= 0")
        for m in ("conventional", "nn", "conv_init", "transfer"):
            if not getattr(self, f"{m}_lr") > 0 or not getattr(self, f"{m}_cost_scale") > 0:
                raise ConfigError(f"{m} learning rate and cost scale must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in [0, 1)")
        return self

    # -- text form ---------------------------------------------------------
    def dumps(self) -> str:
        return "".join(f"{f.name} = {_format(getattr(self, f.name))}\n" for f in fields(self))

    def save(self, path):
        Path(path).write_text(self.dumps())


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(field: dataclasses.Field, raw: str):
    kind = field.type if isinstance(field.type, str) else field.type.__name__
    try:
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{field.name}: cannot parse {raw!r} as {kind}") from None


def loads(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply ``key = value`` lines on top of ``base`` (the desk profile by default)."""
    cfg = dataclasses.replace(base) if base is not None else ExperimentConfig()
    known = {f.name: f for f in fields(cfg)}
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        setattr(cfg, key, _convert(known[key], raw))
    return cfg.validate()


def load(path, profile: str = "desk") -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads(text, ExperimentConfig.profile(profile))


# -- building blocks from a config -------------------------------------------

METHOD_KEYS = {"conventional": "conventional", "nn_based": "nn",
               "conventional_with_init": "conv_init", "transfer": "transfer"}


def grid(cfg: ExperimentConfig):
    from .wave import GridSpec, stable_dt

    dt = cfg.dt or stable_dt(cfg.Lx, cfg.Ly, cfg.nx, cfg.ny, cfg.c0, cfg.courant)
    return GridSpec(cfg.Lx, cfg.Ly, cfg.nx, cfg.ny, dt, cfg.nt)


def survey(cfg: ExperimentConfig):
    from .wave import SineBurst, Survey, top_edge_layout

    sources, receivers = top_edge_layout(cfg.nx, cfg.n_sources, cfg.source_spacing,
                                         cfg.n_receivers, cfg.receiver_spacing)
    return Survey(grid(cfg), sources, receivers, SineBurst(cfg.A0, cfg.kc, cfg.nc), cfg.rho0, cfg.c0)


def inversion_config(cfg: ExperimentConfig, method: str, **overrides):
    from .inversion import InversionConfig
    from .nn import PolynomialDecay

    key = METHOD_KEYS[method]
    clip = getattr(cfg, f"{key}_clip")
    base = InversionConfig(method, getattr(cfg, f"{key}_lr"), clip if clip > 0 else None,
                           getattr(cfg, f"{key}_cost_scale"), cfg.iterations, cfg.seed,
                           PolynomialDecay(cfg.schedule_alpha, cfg.schedule_beta))
    return dataclasses.replace(base, **overrides)


def train_config(cfg: ExperimentConfig, **overrides):
    from .nn import PolynomialDecay
    from .pretrain import TrainConfig

    base = TrainConfig(cfg.epochs, cfg.batch_size, cfg.pretrain_lr,
                       cfg.pretrain_clip if cfg.pretrain_clip > 0 else None,
                       PolynomialDecay(cfg.schedule_alpha, cfg.schedule_beta),
                       cfg.val_fraction, cfg.seed)
    return dataclasses.replace(base, **overrides)
