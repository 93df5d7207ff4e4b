"""Shared oracles for the test-suite."""
import numpy as np

from tlfwi import wave


def rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / nb) if nb else float(np.linalg.norm(a))


def central_difference(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Gradient of scalar ``f`` at ``x`` by central differences, entry by entry."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def fd_check_network(net, x, rng, train=True, h=1e-6):
    """Relative errors of d(input) and d(theta) for the loss ``sum(R * net(x))``."""
    y = net.forward(x, train=train)
    weights = rng.normal(size=y.shape)
    net.zero_grad()
    dx = net.backward(weights)
    dtheta = net.grad.copy()

    def loss_x(xx):
        return float(np.sum(weights * net.forward(xx, train=train)))

    def loss_theta(theta):
        saved = net.theta.copy()
        net.theta[:] = theta
        out = float(np.sum(weights * net.forward(x, train=train)))
        net.theta[:] = saved
        return out

    fx = central_difference(loss_x, x, h)
    ft = central_difference(loss_theta, net.theta.copy(), h) if net.n_params else np.zeros(0)
    return rel_err(dx, fx), (rel_err(dtheta, ft) if net.n_params else 0.0)


def small_survey(nx=24, ny=12, nt=200, n_receivers=4, courant=0.6):
    """Tiny plate with the burst frequency scaled to the coarse resolution."""
    dt = wave.stable_dt(0.1, 0.05, nx, ny, 6000.0, courant)
    grid = wave.GridSpec(0.1, 0.05, nx, ny, dt, nt)
    burst = wave.SineBurst(frequency=5e5 * 128 / nx / 2)
    receivers = tuple((int(i), 0) for i in np.linspace(2, nx - 3, n_receivers))
    return wave.Survey(grid, ((nx // 2, 0),), receivers, burst)


def two_valued(shape, rng, low=0.6, frac=0.3):
    return np.where(rng.random(shape) < frac, low, 1.0)
