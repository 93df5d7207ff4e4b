"""Layers with hand-written backward passes on NCHW float64 arrays.

Each layer exposes ``params`` and ``grads`` as lists of arrays. The owning
network rebinds both lists to views of one flat buffer, so gradients
accumulate in place there.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..errors import MissingForwardState, ShapeMismatch


class Layer:
    param_shapes: tuple = ()

    def __init__(self):
        self.params = [np.zeros(s) for s in self.param_shapes]
        self.grads = [np.zeros(s) for s in self.param_shapes]
        self._cache = None

    @property
    def n_params(self) -> int:
        return int(sum(np.prod(s) for s in self.param_shapes))

    def output_shape(self, shape):
        return shape

    def forward(self, x, train=True):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def buffers(self) -> list:
        return []

    def _pop(self):
        if self._cache is None:
            raise MissingForwardState(f"{type(self).__name__}.backward before forward")
        cache, self._cache = self._cache, None
        return cache

    def __repr__(self):
        return f"{type(self).__name__}()"


class Conv2d(Layer):
    """3x3 convolution, stride 1, zero padding ``padding``."""

    def __init__(self, cin, cout, padding=1):
        self.cin, self.cout, self.padding = cin, cout, padding
        self.param_shapes = ((cout, cin, 3, 3), (cout,))
        super().__init__()

    def output_shape(self, shape):
        c, h, w = shape
        if c != self.cin:
            raise ShapeMismatch(f"conv expects {self.cin} channels, got {c}")
        return (self.cout, h + 2 * self.padding - 2, w + 2 * self.padding - 2)

    def _columns(self, x):
        """im2col matrix of shape (cin*9, N*Ho*Wo)."""
        p = self.padding
        if p:
            x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = sliding_window_view(x, (3, 3), axis=(2, 3))  # N, C, Ho, Wo, 3, 3
        return win.transpose(1, 4, 5, 0, 2, 3).reshape(self.cin * 9, -1)

    def forward(self, x, train=True):
        if x.ndim != 4 or x.shape[1] != self.cin:
            raise ShapeMismatch(f"conv expects (N, {self.cin}, H, W), got {x.shape}")
        w, b = self.params
        n, _, h, wd = x.shape
        ho, wo = h + 2 * self.padding - 2, wd + 2 * self.padding - 2
        out = w.reshape(self.cout, -1) @ self._columns(x)
        out += b[:, None]
        self._cache = x
        return np.ascontiguousarray(out.reshape(self.cout, n, ho, wo).transpose(1, 0, 2, 3))

    def backward(self, dy):
        x = self._pop()
        w, _ = self.params
        gw, gb = self.grads
        n, _, ho, wo = dy.shape
        d = np.ascontiguousarray(dy.transpose(1, 0, 2, 3)).reshape(self.cout, -1)
        gb += d.sum(axis=1)
        gw += (d @ self._columns(x).T).reshape(gw.shape)
        dcols = (w.reshape(self.cout, -1).T @ d).reshape(self.cin, 3, 3, n, ho, wo)
        p = self.padding
        dxp = np.zeros((self.cin, n, ho + 2, wo + 2))
        for kh in range(3):
            for kw in range(3):
                dxp[:, :, kh:kh + ho, kw:kw + wo] += dcols[:, kh, kw]
        if p:
            dxp = dxp[:, :, p:-p, p:-p]
        return np.ascontiguousarray(dxp.transpose(1, 0, 2, 3))

    def __repr__(self):
        return f"Conv2d({self.cin}, {self.cout}, padding={self.padding})"


class BatchNorm2d(Layer):
    """Per-channel normalization; batch statistics in train mode, running ones in eval."""

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.channels, self.momentum, self.eps = channels, momentum, eps
        self.param_shapes = ((channels,), (channels,))
        super().__init__()
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def buffers(self):
        return [self.running_mean, self.running_var]

    def forward(self, x, train=True):
        scale, shift = self.params
        if train:
            m = x.shape[0] * x.shape[2] * x.shape[3]
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            self.running_mean *= 1 - self.momentum
            self.running_mean += self.momentum * mean
            self.running_var *= 1 - self.momentum
            self.running_var += self.momentum * var * m / max(m - 1, 1)
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        self._cache = (xhat, inv_std, train)
        return xhat * scale[None, :, None, None] + shift[None, :, None, None]

    def backward(self, dy):
        xhat, inv_std, train = self._pop()
        scale, _ = self.params
        gs, gb = self.grads
        gs += np.sum(dy * xhat, axis=(0, 2, 3))
        gb += dy.sum(axis=(0, 2, 3))
        dxhat = dy * scale[None, :, None, None]
        if not train:
            return dxhat * inv_std[None, :, None, None]
        m = dy.shape[0] * dy.shape[2] * dy.shape[3]
        s1 = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        s2 = np.sum(dxhat * xhat, axis=(0, 2, 3))[None, :, None, None]
        return (dxhat - s1 / m - xhat * s2 / m) * inv_std[None, :, None, None]

    def __repr__(self):
        return f"BatchNorm2d({self.channels})"


class PReLU(Layer):
    """Leaky rectifier with one learnable negative slope shared by all channels."""

    param_shapes = ((1,),)

    def forward(self, x, train=True):
        a = self.params[0][0]
        neg = x < 0
        self._cache = (x, neg)
        return np.where(neg, a * x, x)

    def backward(self, dy):
        x, neg = self._pop()
        a = self.params[0][0]
        self.grads[0][0] += np.sum(dy * x * neg)
        return np.where(neg, a * dy, dy)


class Sigmoid(Layer):
    def forward(self, x, train=True):
        y = expit(x)
        self._cache = y
        return y

    def backward(self, dy):
        y = self._pop()
        return dy * y * (1.0 - y)


class AdaptiveSigmoid(Layer):
    """``sigmoid(a * x)`` with a learnable steepness ``a``."""

    param_shapes = ((1,),)

    def forward(self, x, train=True):
        a = self.params[0][0]
        y = expit(a * x)
        self._cache = (x, y)
        return y

    def backward(self, dy):
        x, y = self._pop()
        a = self.params[0][0]
        dz = dy * y * (1.0 - y)
        self.grads[0][0] += np.sum(dz * x)
        return dz * a


class MaxPool2d(Layer):
    """2x2 max pooling; ties go to the first element in row-major order."""

    def output_shape(self, shape):
        c, h, w = shape
        if h % 2 or w % 2:
            raise ShapeMismatch(f"maxpool needs even spatial size, got {h}x{w}")
        return (c, h // 2, w // 2)

    def forward(self, x, train=True):
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeMismatch(f"maxpool needs even spatial size, got {h}x{w}")
        blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        blocks = blocks.reshape(n, c, h // 2, w // 2, 4)
        idx = blocks.argmax(axis=-1)
        self._cache = (idx, x.shape)
        return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        idx, shape = self._pop()
        n, c, h, w = shape
        blocks = np.zeros((n, c, h // 2, w // 2, 4))
        np.put_along_axis(blocks, idx[..., None], dy[..., None], axis=-1)
        blocks = blocks.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return blocks.reshape(shape)


class Upsample(Layer):
    """Nearest-neighbour upsampling by two."""

    def output_shape(self, shape):
        c, h, w = shape
        return (c, 2 * h, 2 * w)

    def forward(self, x, train=True):
        self._cache = True
        return x.repeat(2, axis=2).repeat(2, axis=3)

    def backward(self, dy):
        self._pop()
        n, c, h, w = dy.shape
        return dy.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


class ReplicationPad(Layer):
    """Pads one pixel on every side by repeating the edge values."""

    def output_shape(self, shape):
        c, h, w = shape
        return (c, h + 2, w + 2)

    def forward(self, x, train=True):
        self._cache = True
        return np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="edge")

    def backward(self, dy):
        self._pop()
        dx = dy[:, :, 1:-1, 1:-1].copy()
        dx[:, :, 0, :] += dy[:, :, 0, 1:-1]
        dx[:, :, -1, :] += dy[:, :, -1, 1:-1]
        dx[:, :, :, 0] += dy[:, :, 1:-1, 0]
        dx[:, :, :, -1] += dy[:, :, 1:-1, -1]
        dx[:, :, 0, 0] += dy[:, :, 0, 0]
        dx[:, :, 0, -1] += dy[:, :, 0, -1]
        dx[:, :, -1, 0] += dy[:, :, -1, 0]
        dx[:, :, -1, -1] += dy[:, :, -1, -1]
        return dx
