"""Finite-difference solver for the density-scaled 2D scalar wave equation.

The unknown material field ``gamma`` scales the background density,
``rho = gamma * rho0``, while the wave speed stays ``c0``::

    gamma*rho0*u_tt - div(gamma*rho0*c0**2 grad u) = f

Arrays are indexed ``[ix, iy]`` with ``ix`` along the plate length and
``iy = 0`` on the top edge, where sources and receivers sit. Grid points
include both boundaries, so ``dx = Lx / (nx - 1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import NonPositiveGamma, OutOfBounds, ShapeMismatch, UnstableConfig

MAX_COURANT = 0.95
VOID = 1e-5
BACKGROUND = 1.0


@dataclass(frozen=True)
class GridSpec:
    """Space-time discretization of the rectangular plate."""

    Lx: float
    Ly: float
    nx: int
    ny: int
    dt: float
    nt: int

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid needs at least 3x3 points, got {self.nx}x{self.ny}")
        if self.nt < 1:
            raise ValueError("nt must be >= 1")
        if not (self.dt > 0 and self.Lx > 0 and self.Ly > 0):
            raise ValueError("dt, Lx and Ly must be positive")

    @property
    def dx(self) -> float:
        return self.Lx / (self.nx - 1)

    @property
    def dy(self) -> float:
        return self.Ly / (self.ny - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def t_max(self) -> float:
        return self.nt * self.dt

    def times(self) -> np.ndarray:
        return np.arange(self.nt) * self.dt

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid of node coordinates, each of shape (nx, ny)."""
        x = np.linspace(0.0, self.Lx, self.nx)
        y = np.linspace(0.0, self.Ly, self.ny)
        return np.meshgrid(x, y, indexing="ij")

    def position(self, node: tuple[int, int]) -> tuple[float, float]:
        return node[0] * self.dx, node[1] * self.dy

    def nearest_node(self, x: float, y: float) -> tuple[int, int]:
        ix = int(np.clip(np.floor(x / self.dx + 0.5), 0, self.nx - 1))
        iy = int(np.clip(np.floor(y / self.dy + 0.5), 0, self.ny - 1))
        return ix, iy

    def refined(self, factor: int = 2) -> "GridSpec":
        """Grid with ``factor`` times the points and steps (dt divided)."""
        return replace(self, nx=self.nx * factor, ny=self.ny * factor,
                       dt=self.dt / factor, nt=self.nt * factor)

    def contains(self, node: tuple[int, int]) -> bool:
        return 0 <= node[0] < self.nx and 0 <= node[1] < self.ny


@dataclass(frozen=True)
class SineBurst:
    """Hann-windowed tone burst ``A0 sin(wt) sin^2(wt / 2nc)``."""

    amplitude: float = 1.0
    frequency: float = 5e5
    cycles: int = 2

    def __post_init__(self):
        # A0 = 0 is accepted as a silent source
        if self.amplitude < 0 or self.frequency <= 0 or self.cycles < 1:
            raise ValueError("burst needs A0 >= 0, kc > 0 and nc >= 1")

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.frequency

    @property
    def duration(self) -> float:
        return 2.0 * math.pi * self.cycles / self.omega


def burst_force(t, burst: SineBurst):
    """Force of the sine burst at time(s) ``t``; exactly zero after the burst."""
    t = np.asarray(t, dtype=float)
    wt = burst.omega * t
    f = burst.amplitude * np.sin(wt) * np.sin(wt / (2 * burst.cycles)) ** 2
    f = np.where((t >= 0) & (t <= burst.duration), f, 0.0)
    return f if f.ndim else float(f)


def courant_number(grid: GridSpec, c0: float) -> float:
    return c0 * grid.dt * math.sqrt(1.0 / grid.dx**2 + 1.0 / grid.dy**2)


def stable_dt(Lx: float, Ly: float, nx: int, ny: int, c0: float, courant: float) -> float:
    """Time step giving the requested Courant number on an nx x ny grid."""
    dx, dy = Lx / (nx - 1), Ly / (ny - 1)
    return courant / (c0 * math.sqrt(1.0 / dx**2 + 1.0 / dy**2))


@dataclass
class ShotRecord:
    """Receiver traces of one shot, shape (n_receivers, nt)."""

    source: int
    traces: np.ndarray
    dt: float

    @property
    def nt(self) -> int:
        return self.traces.shape[1]


@dataclass(frozen=True)
class Survey:
    """Everything except the material field needed to simulate all shots."""

    grid: GridSpec
    sources: tuple[tuple[int, int], ...]
    receivers: tuple[tuple[int, int], ...]
    burst: SineBurst = field(default_factory=SineBurst)
    rho0: float = 2700.0
    c0: float = 6000.0

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(tuple(map(int, s)) for s in self.sources))
        object.__setattr__(self, "receivers", tuple(tuple(map(int, r)) for r in self.receivers))
        for name, nodes in (("sources", self.sources), ("receivers", self.receivers)):
            if len(set(nodes)) != len(nodes):
                raise ValueError(f"{name} must be distinct grid nodes")
            for node in nodes:
                if not self.grid.contains(node):
                    raise OutOfBounds(f"{name[:-1]} {node} outside {self.grid.shape} grid")

    def with_grid(self, grid: GridSpec) -> "Survey":
        """Same physical acquisition mapped to the nearest nodes of ``grid``."""
        def remap(nodes):
            return tuple(grid.nearest_node(*self.grid.position(n)) for n in nodes)
        return replace(self, grid=grid, sources=remap(self.sources), receivers=remap(self.receivers))


def top_edge_layout(nx: int, n_sources: int = 4, source_spacing: int = 36,
                    n_receivers: int = 24, receiver_spacing: int = 6):
    """Sources and receivers on the top edge, each set centred on the plate."""
    def centred(n, spacing):
        start = (nx - 1 - (n - 1) * spacing) // 2
        nodes = [(start + k * spacing, 0) for k in range(n)]
        if nodes[0][0] < 0 or nodes[-1][0] >= nx:
            raise OutOfBounds(f"{n} nodes spaced {spacing} do not fit on {nx} points")
        return tuple(nodes)

    return centred(n_sources, source_spacing), centred(n_receivers, receiver_spacing)


# ---------------------------------------------------------------------------
# discrete operator

def edge_coefficients(gamma: np.ndarray):
    """Harmonic means of gamma on x- and y-edges, shapes (nx-1, ny), (nx, ny-1)."""
    a, b = gamma[:-1], gamma[1:]
    kx = 2.0 * a * b / (a + b)
    a, b = gamma[:, :-1], gamma[:, 1:]
    ky = 2.0 * a * b / (a + b)
    return kx, ky


def edge_coefficient_derivatives(gamma: np.ndarray):
    """d(kx)/d(gamma) w.r.t. the left/right node and d(ky) w.r.t. lower/upper."""
    def pair(a, b):
        s2 = (a + b) ** 2
        return 2.0 * b * b / s2, 2.0 * a * a / s2
    return pair(gamma[:-1], gamma[1:]), pair(gamma[:, :-1], gamma[:, 1:])


def apply_operator(u: np.ndarray, cx: np.ndarray, cy: np.ndarray, out: np.ndarray | None = None):
    """Flux-divergence stencil with mirrored ghost nodes (homogeneous Neumann).

    ``cx`` and ``cy`` are edge coefficients already multiplied by
    ``(c0*dt/dx)**2`` and ``(c0*dt/dy)**2``. Mirroring doubles the single
    interior flux seen by every boundary node.
    """
    if out is None:
        out = np.zeros_like(u)
    else:
        out.fill(0.0)
    fx = cx * (u[1:] - u[:-1])
    fy = cy * (u[:, 1:] - u[:, :-1])
    out[:-1] += fx
    out[1:] -= fx
    out[0] += fx[0]
    out[-1] -= fx[-1]
    out[:, :-1] += fy
    out[:, 1:] -= fy
    out[:, 0] += fy[:, 0]
    out[:, -1] -= fy[:, -1]
    return out


def boundary_weights(shape: tuple[int, int]) -> np.ndarray:
    """Nodal quadrature weights: 1 inside, 1/2 on edges, 1/4 at corners."""
    wx = np.ones(shape[0])
    wx[[0, -1]] = 0.5
    wy = np.ones(shape[1])
    wy[[0, -1]] = 0.5
    return np.outer(wx, wy)


def apply_operator_transpose(p: np.ndarray, cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    w = boundary_weights(p.shape)
    return w * apply_operator(p / w, cx, cy)


def _scaled_edges(gamma: np.ndarray, grid: GridSpec, c0: float):
    kx, ky = edge_coefficients(gamma)
    ax = (c0 * grid.dt / grid.dx) ** 2
    ay = (c0 * grid.dt / grid.dy) ** 2
    return ax * kx, ay * ky


def check_gamma(gamma: np.ndarray, grid: GridSpec) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.shape != grid.shape:
        raise ShapeMismatch(f"gamma has shape {gamma.shape}, grid is {grid.shape}")
    if not np.all(np.isfinite(gamma)) or np.any(gamma <= 0):
        raise NonPositiveGamma("gamma must be finite and strictly positive")
    return gamma


def check_stability(grid: GridSpec, c0: float, allow_unstable: bool = False):
    c = courant_number(grid, c0)
    if c > MAX_COURANT and not allow_unstable:
        raise UnstableConfig(f"Courant number {c:.3f} exceeds {MAX_COURANT}")
    return c


def _node_index(nodes: Sequence[tuple[int, int]], grid: GridSpec):
    nodes = list(nodes)
    for node in nodes:
        if not grid.contains(node):
            raise OutOfBounds(f"node {node} outside {grid.shape} grid")
    idx = np.array(nodes, dtype=np.intp).reshape(-1, 2)
    return idx[:, 0], idx[:, 1]


def simulate(gamma: np.ndarray, grid: GridSpec, burst: SineBurst, source: tuple[int, int],
             receivers: Sequence[tuple[int, int]], rho0: float = 2700.0, c0: float = 6000.0,
             store_history: bool = False, allow_unstable: bool = False,
             initial: np.ndarray | None = None, source_id: int = 0):
    """Leapfrog time stepping of one shot.

    Returns ``(ShotRecord, history)`` where ``history`` has shape
    (nt, nx, ny) when ``store_history`` is set and is ``None`` otherwise.
    ``initial`` sets a displacement at rest (testing only).
    """
    gamma = check_gamma(gamma, grid)
    check_stability(grid, c0, allow_unstable)
    sx, sy = _node_index([source], grid)
    rx, ry = _node_index(receivers, grid)

    cx, cy = _scaled_edges(gamma, grid, c0)
    inv_gamma = 1.0 / gamma
    force = burst_force(grid.times(), burst) * grid.dt**2 / (rho0 * grid.dx * grid.dy)
    # a boundary node owns only part of a cell (1/2 on edges, 1/4 at corners)
    force = force / (gamma[sx[0], sy[0]] * boundary_weights(grid.shape)[sx[0], sy[0]])

    u = np.zeros(grid.shape) if initial is None else np.array(initial, dtype=np.float64)
    u_prev = u.copy()
    lap = np.empty_like(u)
    traces = np.empty((len(rx), grid.nt))
    history = np.empty((grid.nt,) + grid.shape) if store_history else None

    for n in range(grid.nt):
        traces[:, n] = u[rx, ry]
        if history is not None:
            history[n] = u
        if n == grid.nt - 1:
            break
        apply_operator(u, cx, cy, out=lap)
        lap *= inv_gamma
        lap += 2.0 * u
        lap -= u_prev
        lap[sx[0], sy[0]] += force[n]
        u_prev, u, lap = u, lap, u_prev

    if not np.all(np.isfinite(traces)):
        raise UnstableConfig("non-finite wavefield; solver diverged")
    return ShotRecord(source_id, traces, grid.dt), history


def simulate_survey(gamma: np.ndarray, survey: Survey, store_history: bool = False,
                    allow_unstable: bool = False):
    """Simulate every shot of a survey; returns (records, histories)."""
    records, histories = [], []
    for s, src in enumerate(survey.sources):
        rec, hist = simulate(gamma, survey.grid, survey.burst, src, survey.receivers,
                             survey.rho0, survey.c0, store_history, allow_unstable, source_id=s)
        records.append(rec)
        histories.append(hist)
    return records, histories
