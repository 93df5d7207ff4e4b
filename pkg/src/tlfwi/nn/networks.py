"""Generator and U-Net architectures as small layer graphs.

A network is an ordered list of :class:`Node` rows. Each row applies a few
layers to the concatenation (along channels) of earlier outputs, which is
all the skip wiring the U-Net needs. Rows mirror the architecture tables
one-to-one, so per-row shapes and parameter counts can be listed directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import MissingForwardState, ShapeMismatch
from .layers import (AdaptiveSigmoid, BatchNorm2d, Conv2d, Layer, MaxPool2d, PReLU,
                     ReplicationPad, Sigmoid, Upsample)

INPUT = -1


@dataclass
class Node:
    name: str
    layers: list[Layer]
    inputs: tuple[int, ...] = ()  # empty means "previous row"

    @property
    def param_counts(self) -> tuple[int, ...]:
        return tuple(layer.n_params for layer in self.layers if layer.n_params)


@dataclass
class TableRow:
    name: str
    shape: tuple[int, ...]
    params: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.params)


class Network:
    """Layer graph with all learnable parameters in one flat vector ``theta``."""

    def __init__(self, nodes: list[Node], input_shape: tuple[int, int, int], kind: str = "custom"):
        self.nodes = nodes
        self.input_shape = tuple(input_shape)
        self.kind = kind
        for i, node in enumerate(nodes):
            if not node.inputs:
                node.inputs = (i - 1,) if i else (INPUT,)
            if any(j >= i for j in node.inputs):
                raise ValueError(f"row {node.name!r} reads a later row")
        self.layers = [layer for node in nodes for layer in node.layers]
        sizes = [layer.n_params for layer in self.layers]
        self.theta = np.zeros(sum(sizes))
        self.grad = np.zeros_like(self.theta)
        self.offsets = {}
        pos = 0
        for li, layer in enumerate(self.layers):
            views, gviews = [], []
            for shape, p in zip(layer.param_shapes, layer.params):
                size = int(np.prod(shape))
                self.theta[pos:pos + size] = p.ravel()
                views.append(self.theta[pos:pos + size].reshape(shape))
                gviews.append(self.grad[pos:pos + size].reshape(shape))
                pos += size
            self.offsets[li] = pos - layer.n_params
            layer.params, layer.grads = views, gviews
        self._splits = None
        self.build_args: dict = {}
        self.table()  # validates shape compatibility

    # -- bookkeeping -------------------------------------------------------
    @property
    def n_params(self) -> int:
        return self.theta.size

    def buffers(self) -> list[np.ndarray]:
        return [b for layer in self.layers for b in layer.buffers()]

    def tensors(self) -> list[np.ndarray]:
        """Parameters then buffers, layer by layer, in declaration order."""
        out = []
        for layer in self.layers:
            out.extend(layer.params)
            out.extend(layer.buffers())
        return out

    def zero_grad(self):
        self.grad.fill(0.0)

    def table(self) -> list[TableRow]:
        rows = [TableRow("input", self.input_shape, ())]
        shapes = []
        for node in self.nodes:
            ins = [self.input_shape if j == INPUT else shapes[j] for j in node.inputs]
            if any(s[1:] != ins[0][1:] for s in ins):
                raise ShapeMismatch(f"row {node.name!r}: cannot concatenate {ins}")
            shape = (sum(s[0] for s in ins),) + tuple(ins[0][1:])
            for layer in node.layers:
                shape = layer.output_shape(shape)
            shapes.append(shape)
            rows.append(TableRow(node.name, shape, node.param_counts))
        return rows

    def output_shape(self) -> tuple[int, ...]:
        return self.table()[-1].shape

    # -- passes ------------------------------------------------------------
    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeMismatch(f"input {x.shape[1:]} does not match {self.input_shape}")
        outs = []
        self._splits = []
        for node in self.nodes:
            ins = [x if j == INPUT else outs[j] for j in node.inputs]
            self._splits.append([a.shape[1] for a in ins])
            h = ins[0] if len(ins) == 1 else np.concatenate(ins, axis=1)
            for layer in node.layers:
                h = layer.forward(h, train)
            outs.append(h)
        return outs[-1]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients into ``self.grad``; returns d(input)."""
        if self._splits is None:
            raise MissingForwardState("backward() before forward()")
        douts: list = [None] * len(self.nodes)
        douts[-1] = np.asarray(dy, dtype=np.float64)
        dx = None
        for i in range(len(self.nodes) - 1, -1, -1):
            node = self.nodes[i]
            d = douts[i]
            if d is None:
                continue
            for layer in reversed(node.layers):
                d = layer.backward(d)
            parts = np.split(d, np.cumsum(self._splits[i])[:-1], axis=1)
            for j, part in zip(node.inputs, parts):
                if j == INPUT:
                    dx = part if dx is None else dx + part
                else:
                    douts[j] = part if douts[j] is None else douts[j] + part
        self._splits = None
        return dx

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Eval-mode forward without keeping backward state."""
        y = self.forward(x, train=False)
        for layer in self.layers:
            layer._cache = None
        self._splits = None
        return y


# ---------------------------------------------------------------------------
# architectures

def _conv_row(name, cin, cout, bn=False, act="prelu", padding=1, inputs=()):
    layers: list[Layer] = [Conv2d(cin, cout, padding)]
    if bn:
        layers.append(BatchNorm2d(cout))
    layers.append({"prelu": PReLU, "sigmoid": Sigmoid,
                   "adaptive_sigmoid": AdaptiveSigmoid}[act]())
    return Node(name, layers, tuple(inputs))


def generator(grid_shape=(256, 128), latent_channels=128,
              widths=(128, 64, 64, 32, 32)) -> Network:
    """Decoder that upsamples a fixed noise tensor five times to the grid.

    ``widths`` are the channel counts of the five upsample stages; the
    default reproduces the published 526,252-parameter network. The final
    unpadded convolution loses one pixel per side, which an edge-replication
    row restores so the output matches the grid.
    """
    nx, ny = grid_shape
    scale = 2 ** len(widths)
    if nx % scale or ny % scale:
        raise ShapeMismatch(f"generator needs grid dims divisible by {scale}, got {grid_shape}")
    nodes = []
    c = latent_channels
    for width in widths:
        nodes.append(Node("upsample", [Upsample()]))
        nodes.append(_conv_row("2D convolution & PReLU", c, width))
        nodes.append(_conv_row("2D convolution & PReLU", width, width))
        c = width
    nodes.append(_conv_row("2D convolution without padding & adaptive Sigmoid", c, 1,
                           act="adaptive_sigmoid", padding=0))
    nodes.append(Node("edge replication", [ReplicationPad()]))
    net = Network(nodes, (latent_channels, nx // scale, ny // scale), kind="generator")
    net.build_args = dict(grid_shape=tuple(grid_shape), latent_channels=latent_channels,
                          widths=tuple(widths))
    return net


def unet(grid_shape=(256, 128), in_channels=1, widths=(16, 32, 64, 128)) -> Network:
    """U-Net whose skips carry the pooled encoder outputs (and the raw input).

    The decoder's first convolution per level has batch norm, the second does
    not; with the default widths this is the published 784,039-parameter
    network.
    """
    nx, ny = grid_shape
    depth = len(widths)
    if nx % 2**depth or ny % 2**depth:
        raise ShapeMismatch(f"U-Net needs grid dims divisible by {2**depth}, got {grid_shape}")
    nodes: list[Node] = []
    skips = [INPUT]
    c = in_channels
    for w in widths:
        nodes.append(_conv_row("2D Convolution & BN & PReLU", c, w, bn=True))
        nodes.append(_conv_row("2D Convolution & BN & PReLU", w, w, bn=True))
        nodes.append(Node("Maxpool 2D", [MaxPool2d()]))
        skips.append(len(nodes) - 1)
        c = w
    bottom = widths[-1]
    nodes.append(_conv_row("2D Convolution & BN & PReLU", c, bottom, bn=True))
    nodes.append(_conv_row("2D Convolution & BN & PReLU", bottom, bottom, bn=True))
    c = bottom
    skip_channels = [in_channels] + list(widths)
    for level in range(depth - 1, -1, -1):
        nodes.append(Node("Upsample", [Upsample()]))
        up = len(nodes) - 1
        cin = c + skip_channels[level]
        cout = widths[level - 1] if level > 0 else 1
        nodes.append(_conv_row("2D Convolution & BN & PReLU", cin, cout, bn=True,
                               inputs=(up, skips[level])))
        if level > 0:
            nodes.append(_conv_row("2D Convolution & PReLU", cout, cout))
        c = cout
    nodes.append(_conv_row("2D Convolution & Sigmoid", c, 1, act="sigmoid"))
    net = Network(nodes, (in_channels, nx, ny), kind="unet")
    net.build_args = dict(grid_shape=tuple(grid_shape), in_channels=in_channels, widths=tuple(widths))
    return net


def glorot_uniform(rng, shape):
    cout, cin, kh, kw = shape
    fan_in, fan_out = cin * kh * kw, cout * kh * kw
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_weights(net: Network, seed: int, last_std: float = 0.01, last_bias: float = 3.0) -> np.ndarray:
    """Glorot everywhere, narrow normal weights and a high bias on the last conv.

    The last-layer treatment makes a fresh network output roughly
    ``sigmoid(last_bias)`` everywhere, i.e. almost intact material.
    Returns (and installs) the parameter vector.
    """
    rng = np.random.default_rng(seed)
    convs = [layer for layer in net.layers if isinstance(layer, Conv2d)]
    for layer in net.layers:
        if isinstance(layer, Conv2d):
            w, b = layer.params
            if layer is convs[-1]:
                w[...] = rng.normal(0.0, last_std, size=w.shape)
                b[...] = last_bias
            else:
                w[...] = glorot_uniform(rng, w.shape)
                b[...] = 0.0
        elif isinstance(layer, BatchNorm2d):
            layer.params[0][...] = 1.0
            layer.params[1][...] = 0.0
            layer.running_mean[...] = 0.0
            layer.running_var[...] = 1.0
        elif isinstance(layer, PReLU):
            layer.params[0][...] = 0.25
        elif isinstance(layer, AdaptiveSigmoid):
            layer.params[0][...] = 1.0
    return net.theta.copy()


def noise_input(shape, seed: int) -> np.ndarray:
    """Fixed standard-normal generator input."""
    return np.random.default_rng(seed).standard_normal(shape)[None]
