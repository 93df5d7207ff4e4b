"""Misfit functional and its adjoint-state gradient with respect to gamma.

The adjoint here is the exact transpose of the discrete leapfrog scheme in
:mod:`tlfwi.wave`, so gradients agree with finite differences of the
discrete misfit to rounding error rather than to discretization error.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import wave
from .errors import MissingHistory, ShapeMismatch, UnstableConfig
from .wave import GridSpec, ShotRecord, Survey


def misfit(sim: Sequence[ShotRecord], obs: Sequence[ShotRecord]) -> float:
    """``0.5 * sum (sim - obs)**2 * dt`` over shots, receivers and time."""
    if len(sim) != len(obs):
        raise ShapeMismatch(f"{len(sim)} simulated vs {len(obs)} observed shots")
    total = 0.0
    for s, o in zip(sim, obs):
        if s.traces.shape != o.traces.shape:
            raise ShapeMismatch(f"trace shapes {s.traces.shape} vs {o.traces.shape}")
        if not np.isclose(s.dt, o.dt, rtol=1e-12, atol=0.0):
            raise ShapeMismatch(f"dt {s.dt} vs {o.dt}")
        r = s.traces - o.traces
        total += 0.5 * float(np.sum(r * r)) * s.dt
    return total


def residuals(sim: Sequence[ShotRecord], obs: Sequence[ShotRecord]) -> list[np.ndarray]:
    if len(sim) != len(obs):
        raise ShapeMismatch(f"{len(sim)} simulated vs {len(obs)} observed shots")
    out = []
    for s, o in zip(sim, obs):
        if s.traces.shape != o.traces.shape:
            raise ShapeMismatch(f"trace shapes {s.traces.shape} vs {o.traces.shape}")
        out.append(s.traces - o.traces)
    return out


def adjoint_simulate(gamma: np.ndarray, grid: GridSpec, residual: np.ndarray,
                     receivers: Sequence[tuple[int, int]], rho0: float = 2700.0,
                     c0: float = 6000.0, allow_unstable: bool = False) -> np.ndarray:
    """Time-reversed run driven by ``residual`` (n_receivers, nt) at the receivers.

    Residuals enter as point sources normalized by the cell area, mirroring
    the forward injection. The result is indexed in forward time, shape
    (nt, nx, ny).
    """
    gamma = wave.check_gamma(gamma, grid)
    wave.check_stability(grid, c0, allow_unstable)
    rx, ry = wave._node_index(receivers, grid)
    residual = np.asarray(residual, dtype=np.float64)
    if residual.shape != (len(rx), grid.nt):
        raise ShapeMismatch(f"residual shape {residual.shape}, expected {(len(rx), grid.nt)}")

    cx, cy = wave._scaled_edges(gamma, grid, c0)
    w = wave.boundary_weights(grid.shape)
    inv_gamma = 1.0 / gamma
    src = residual * grid.dt**2 / (rho0 * grid.dx * grid.dy)

    hist = np.zeros((grid.nt,) + grid.shape)
    nxt = np.zeros(grid.shape)   # u^{n+1}
    nxt2 = np.zeros(grid.shape)  # u^{n+2}
    for n in range(grid.nt - 1, -1, -1):
        cur = w * wave.apply_operator(nxt / w, cx, cy)
        np.add.at(cur, (rx, ry), src[:, n])
        cur *= inv_gamma
        cur += 2.0 * nxt - nxt2
        hist[n] = cur
        nxt2, nxt = nxt, cur
    if not np.all(np.isfinite(hist)):
        raise UnstableConfig("non-finite adjoint field")
    return hist


def _to_multiplier(adjoint: np.ndarray, grid: GridSpec, rho0: float) -> np.ndarray:
    # The Lagrange multiplier of the discrete scheme differs from the adjoint
    # field only by this constant.
    return adjoint * (rho0 * grid.dx * grid.dy / grid.dt)


def _single_shot_gradient(gamma, grid, u, p, c0):
    """dL/dgamma for one shot given primal ``u`` and multiplier ``p``."""
    nt = grid.nt
    g = np.zeros(grid.shape)
    if nt < 2:
        return g
    # Mass term: -sum_n p^{n+1} (u^{n+1} - 2u^n + u^{n-1}), with u^{-1} = 0.
    accel = u[1:] - 2.0 * u[:-1]
    accel[1:] += u[:-2]
    g -= np.einsum("nij,nij->ij", p[1:], accel)

    # Stiffness term through the harmonic edge means.
    ax = (c0 * grid.dt / grid.dx) ** 2
    ay = (c0 * grid.dt / grid.dy) ** 2
    (dxa, dxb), (dya, dyb) = wave.edge_coefficient_derivatives(gamma)
    wx = np.ones((grid.nx, 1))
    wx[[0, -1]] = 0.5
    wy = np.ones((1, grid.ny))
    wy[:, [0, -1]] = 0.5

    un = u[:-1]
    qx = p[1:] / wx
    ex = np.einsum("nij,nij->ij", qx[:, 1:] - qx[:, :-1], un[:, 1:] - un[:, :-1])
    g[:-1] -= ax * dxa * ex
    g[1:] -= ax * dxb * ex
    del qx, ex
    qy = p[1:] / wy
    ey = np.einsum("nij,nij->ij", qy[:, :, 1:] - qy[:, :, :-1], un[:, :, 1:] - un[:, :, :-1])
    g[:, :-1] -= ay * dya * ey
    g[:, 1:] -= ay * dyb * ey
    return g


def material_gradient(gamma: np.ndarray, grid: GridSpec, primal: Sequence[np.ndarray],
                      adjoint: Sequence[np.ndarray], rho0: float = 2700.0,
                      c0: float = 6000.0) -> np.ndarray:
    """Sum over shots of the time-integrated primal/adjoint correlation.

    Discrete counterpart of ``int -rho0 u'_adj u' + rho0 c0^2 grad u_adj . grad u dt``:
    the velocity product appears through the second time difference of the
    primal field and the gradient product through the same harmonic-mean
    edge stencil the forward operator uses.
    """
    gamma = wave.check_gamma(gamma, grid)
    if len(primal) != len(adjoint):
        raise ShapeMismatch(f"{len(primal)} primal vs {len(adjoint)} adjoint histories")
    expected = (grid.nt,) + grid.shape
    g = np.zeros(grid.shape)
    for u, ua in zip(primal, adjoint):
        if u is None or ua is None:
            raise MissingHistory("full-stride primal and adjoint histories are required")
        if u.shape != expected or ua.shape != expected:
            raise ShapeMismatch(f"history shapes {u.shape}/{ua.shape}, expected {expected}")
        g += _single_shot_gradient(gamma, grid, u, _to_multiplier(ua, grid, rho0), c0)
    return g


def misfit_and_gradient(gamma: np.ndarray, survey: Survey, observed: Sequence[ShotRecord],
                        allow_unstable: bool = False):
    """Misfit, gradient and simulated records for all shots of ``survey``.

    Shots are processed one at a time so only one pair of histories is held
    in memory.
    """
    if len(observed) != len(survey.sources):
        raise ShapeMismatch(f"{len(observed)} observed shots for {len(survey.sources)} sources")
    grid = survey.grid
    grad = np.zeros(grid.shape)
    records = []
    for s, src in enumerate(survey.sources):
        rec, u = wave.simulate(gamma, grid, survey.burst, src, survey.receivers,
                               survey.rho0, survey.c0, store_history=True,
                               allow_unstable=allow_unstable, source_id=s)
        records.append(rec)
        res = residuals([rec], [observed[s]])[0]
        ua = adjoint_simulate(gamma, grid, res, survey.receivers, survey.rho0, survey.c0,
                              allow_unstable)
        grad += material_gradient(gamma, grid, [u], [ua], survey.rho0, survey.c0)
    return misfit(records, observed), grad, records


def jacobian_transpose(gamma: np.ndarray, survey: Survey, weights: Sequence[np.ndarray],
                       histories: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """``J^T w`` where J maps gamma to the stacked receiver traces."""
    grid = survey.grid
    out = np.zeros(grid.shape)
    for s, src in enumerate(survey.sources):
        if histories is None:
            _, u = wave.simulate(gamma, grid, survey.burst, src, survey.receivers,
                                 survey.rho0, survey.c0, store_history=True)
        else:
            u = histories[s]
        # misfit gradient of 0.5*sum(r^2)*dt is J^T (r*dt); feed r = w/dt
        ua = adjoint_simulate(gamma, grid, np.asarray(weights[s]) / grid.dt,
                              survey.receivers, survey.rho0, survey.c0)
        out += material_gradient(gamma, grid, [u], [ua], survey.rho0, survey.c0)
    return out


def born_simulate(gamma: np.ndarray, dgamma: np.ndarray, survey: Survey, source: int,
                  history: np.ndarray | None = None) -> np.ndarray:
    """Tangent-linear traces ``J dgamma`` for one shot, shape (n_receivers, nt)."""
    grid = survey.grid
    gamma = wave.check_gamma(gamma, grid)
    dgamma = np.asarray(dgamma, dtype=np.float64)
    if history is None:
        _, history = wave.simulate(gamma, grid, survey.burst, survey.sources[source],
                                   survey.receivers, survey.rho0, survey.c0, store_history=True)
    u = history
    rx, ry = wave._node_index(survey.receivers, grid)
    cx, cy = wave._scaled_edges(gamma, grid, survey.c0)
    ax = (survey.c0 * grid.dt / grid.dx) ** 2
    ay = (survey.c0 * grid.dt / grid.dy) ** 2
    (dxa, dxb), (dya, dyb) = wave.edge_coefficient_derivatives(gamma)
    dcx = ax * (dxa * dgamma[:-1] + dxb * dgamma[1:])
    dcy = ay * (dya * dgamma[:, :-1] + dyb * dgamma[:, 1:])
    inv_gamma = 1.0 / gamma

    du = np.zeros(grid.shape)
    du_prev = np.zeros(grid.shape)
    traces = np.empty((len(rx), grid.nt))
    for n in range(grid.nt):
        traces[:, n] = du[rx, ry]
        if n == grid.nt - 1:
            break
        accel = u[n + 1] - 2.0 * u[n] + (u[n - 1] if n > 0 else 0.0)
        rhs = wave.apply_operator(du, cx, cy) + wave.apply_operator(u[n], dcx, dcy)
        rhs -= dgamma * accel
        du_next = 2.0 * du - du_prev + rhs * inv_gamma
        du_prev, du = du, du_next
    return traces
