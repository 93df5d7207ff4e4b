"""Adam and RMSprop on flat parameter vectors, with norm clipping and decay."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PolynomialDecay:
    """Learning-rate factor ``(beta * epoch + 1) ** alpha``."""

    alpha: float = -0.5
    beta: float = 0.2

    def __call__(self, epoch: int) -> float:
        return float((self.beta * epoch + 1.0) ** self.alpha)


CONSTANT = PolynomialDecay(alpha=0.0, beta=0.0)


def clip_by_global_norm(grads: np.ndarray, threshold: float | None):
    """Scale ``grads`` so its L2 norm is at most ``threshold``; returns (clipped, norm)."""
    norm = float(np.linalg.norm(grads))
    if threshold is None or norm <= threshold or norm == 0.0:
        return grads, norm
    return grads * (threshold / norm), norm


class _Optimizer:
    def __init__(self, size: int, lr: float, clip: float | None = None,
                 schedule: PolynomialDecay = CONSTANT, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.size, self.lr, self.clip, self.schedule, self.eps = size, lr, clip, schedule, eps
        self.steps = 0

    def learning_rate(self, epoch: int) -> float:
        return self.lr * self.schedule(epoch)

    def step(self, params: np.ndarray, grads: np.ndarray, epoch: int) -> np.ndarray:
        """Clip, then update ``params`` in place; returns ``params``."""
        if params.shape != (self.size,) or grads.shape != (self.size,):
            raise ValueError(f"expected vectors of length {self.size}")
        g, _ = clip_by_global_norm(grads, self.clip)
        self.steps += 1
        params -= self._direction(g) * self.learning_rate(epoch)
        return params


class Adam(_Optimizer):
    def __init__(self, size, lr, clip=None, schedule=CONSTANT, betas=(0.9, 0.999), eps=1e-8):
        super().__init__(size, lr, clip, schedule, eps)
        self.beta1, self.beta2 = betas
        self.m = np.zeros(size)
        self.v = np.zeros(size)

    def _direction(self, g):
        b1, b2 = self.beta1, self.beta2
        self.m *= b1
        self.m += (1 - b1) * g
        self.v *= b2
        self.v += (1 - b2) * g * g
        m_hat = self.m / (1 - b1**self.steps)
        v_hat = self.v / (1 - b2**self.steps)
        return m_hat / (np.sqrt(v_hat) + self.eps)


class RMSprop(_Optimizer):
    """Running average of squared gradients, no momentum."""

    def __init__(self, size, lr, clip=None, schedule=CONSTANT, alpha=0.99, eps=1e-8):
        super().__init__(size, lr, clip, schedule, eps)
        self.alpha = alpha
        self.sq = np.zeros(size)

    def _direction(self, g):
        self.sq *= self.alpha
        self.sq += (1 - self.alpha) * g * g
        return g / (np.sqrt(self.sq) + self.eps)
