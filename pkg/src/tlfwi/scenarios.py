"""Damage scenarios, rasterization and synthetic observations."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import wave
from .errors import EmptyDomain, InverseCrime, ShapeMismatch
from .wave import GridSpec, ShotRecord, Survey

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Ellipse:
    a: float
    b: float
    xc: float
    yc: float
    phi: float = 0.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("ellipse semi-axes must be positive")

    def contains(self, x, y):
        c, s = math.cos(self.phi), math.sin(self.phi)
        dx, dy = x - self.xc, y - self.yc
        xr = c * dx + s * dy
        yr = -s * dx + c * dy
        return (xr / self.a) ** 2 + (yr / self.b) ** 2 <= 1.0

    @property
    def area(self) -> float:
        return math.pi * self.a * self.b


@dataclass(frozen=True)
class Rectangle:
    x0: float
    y0: float
    w: float
    h: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError("rectangle needs positive width and height")

    def contains(self, x, y):
        return (x >= self.x0) & (x <= self.x0 + self.w) & (y >= self.y0) & (y <= self.y0 + self.h)

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class Circle:
    xc: float
    yc: float
    r: float

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("circle radius must be positive")

    def contains(self, x, y):
        return (x - self.xc) ** 2 + (y - self.yc) ** 2 <= self.r**2

    @property
    def area(self) -> float:
        return math.pi * self.r**2


DamageShape = Union[Ellipse, Rectangle, Circle]


@dataclass(frozen=True)
class Scenario:
    shapes: tuple[DamageShape, ...]
    void: float = wave.VOID
    background: float = wave.BACKGROUND

    def describe(self) -> str:
        parts = []
        for sh in self.shapes:
            fields = ",".join(f"{k}={v:.6g}" for k, v in vars(sh).items())
            parts.append(f"{type(sh).__name__.lower()}({fields})")
        return ";".join(parts)


def rasterize(scenario: Scenario, grid: GridSpec) -> np.ndarray:
    """Void value on nodes inside any shape, background elsewhere."""
    x, y = grid.coordinates()
    inside = np.zeros(grid.shape, dtype=bool)
    for shape in scenario.shapes:
        inside |= shape.contains(x, y)
    if inside.all():
        raise EmptyDomain("every grid point is void")
    return np.where(inside, scenario.void, scenario.background)


def void_fraction(field: np.ndarray, threshold: float = 0.5) -> float:
    return float(np.mean(field < threshold))


def sample_scenario(rng: np.random.Generator, Lx: float = 0.1, Ly: float = 0.05,
                    axes=(0.003, 0.012), edge_gap: float = 0.005) -> Scenario:
    """One randomly placed and oriented elliptical void kept clear of the edges."""
    a, b = rng.uniform(axes[0], axes[1], size=2)
    margin = max(a, b) + edge_gap
    xc = rng.uniform(margin, Lx - margin)
    yc = rng.uniform(margin, Ly - margin)
    phi = rng.uniform(0.0, math.pi)
    return Scenario((Ellipse(float(a), float(b), float(xc), float(yc), float(phi)),))


def case_scenario(name: str) -> Scenario:
    """Fixed damage cases on the 0.1 m x 0.05 m plate, in rising complexity."""
    cases = {
        "case1": Scenario((Ellipse(0.009, 0.005, 0.045, 0.028, 0.6),)),
        "case2": Scenario((Rectangle(0.025, 0.022, 0.016, 0.010), Circle(0.068, 0.026, 0.006))),
        "case3": Scenario((Ellipse(0.006, 0.004, 0.022, 0.030, 0.3),
                           Ellipse(0.008, 0.005, 0.052, 0.020, 1.9),
                           Ellipse(0.005, 0.005, 0.080, 0.032, 0.0))),
        "case4": Scenario((Rectangle(0.035, 0.016, 0.022, 0.006), Rectangle(0.043, 0.010, 0.006, 0.018),
                           Circle(0.046, 0.034, 0.0045), Circle(0.046, 0.043, 0.003),
                           Circle(0.046, 0.0475, 0.0015),
                           Circle(0.012, 0.025, 0.004), Circle(0.088, 0.025, 0.004))),
    }
    try:
        return cases[name]
    except KeyError:
        raise KeyError(f"unknown case {name!r}; choose from {sorted(cases)}") from None


def generate_observation(scenario: Scenario, fine_survey: Survey, coarse_survey: Survey,
                         factor: int = 2) -> list[ShotRecord]:
    """Traces simulated on a finer grid and decimated to the coarse time axis.

    The fine survey must be the coarse one refined by ``factor`` in space and
    time; observing on the inversion grid itself is refused.
    """
    fg, cg = fine_survey.grid, coarse_survey.grid
    if fg == cg:
        raise InverseCrime("observations must not be generated on the inversion grid")
    if (fg.nx, fg.ny, fg.nt) != (cg.nx * factor, cg.ny * factor, cg.nt * factor) or \
            not math.isclose(fg.dt * factor, cg.dt, rel_tol=1e-12):
        raise ShapeMismatch(f"fine grid {fg} is not a {factor}x refinement of {cg}")
    gamma = rasterize(scenario, fg)
    records, _ = wave.simulate_survey(gamma, fine_survey)
    return [ShotRecord(r.source, np.ascontiguousarray(r.traces[:, ::factor]), cg.dt) for r in records]


def fine_survey_for(coarse: Survey, factor: int = 2) -> Survey:
    """Coarse acquisition moved to the nearest nodes of the refined grid."""
    return coarse.with_grid(coarse.grid.refined(factor))


def normalize_max_abs(g: np.ndarray) -> np.ndarray:
    m = float(np.max(np.abs(g)))
    return g / m if m > 0 else g.copy()


NORMALIZATIONS = {1: "max-abs"}
NORM_MAX_ABS = 1


@dataclass
class DatasetRecord:
    input: np.ndarray
    target: np.ndarray
    seed: int
    description: str = ""


def make_record(seed: int, coarse: Survey, fine: Survey | None = None) -> DatasetRecord:
    from .inversion import first_iteration_gradient

    fine = fine or fine_survey_for(coarse)
    scenario = sample_scenario(np.random.default_rng(seed), coarse.grid.Lx, coarse.grid.Ly)
    truth = rasterize(scenario, coarse.grid)
    obs = generate_observation(scenario, fine, coarse)
    g0 = first_iteration_gradient(obs, coarse)
    return DatasetRecord(normalize_max_abs(g0), truth, seed, scenario.describe())


def build_pretrain_dataset(n: int, seed: int, coarse: Survey, path=None,
                           manifest_path=None) -> list[DatasetRecord]:
    """Sample ``n`` scenarios and pair each first-iteration gradient with its truth.

    Record ``i`` uses seed ``seed + i``. A sample whose simulation fails is
    logged and skipped. With ``path`` the records are written as an FWID
    file, and with ``manifest_path`` one scenario line per record.
    """
    from .formats import write_dataset

    if n < 1:
        raise ValueError("n must be >= 1")
    fine = fine_survey_for(coarse)
    records = []
    for i in range(n):
        s = seed + i
        try:
            records.append(make_record(s, coarse, fine))
        except wave.UnstableConfig as exc:
            log.warning("skipping sample seed=%d: %s", s, exc)
    if path is not None:
        write_dataset(path, records, NORM_MAX_ABS)
    if manifest_path is not None:
        with open(manifest_path, "w") as fh:
            for r in records:
                fh.write(f"{r.seed}\t{r.description}\n")
    return records
