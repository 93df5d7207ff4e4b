"""Minimal convolutional network stack used by the NN-based inversions."""
from .layers import (AdaptiveSigmoid, BatchNorm2d, Conv2d, MaxPool2d, PReLU, ReplicationPad,
                     Sigmoid, Upsample)
from .networks import Network, Node, generator, init_weights, noise_input, unet
from .optim import Adam, PolynomialDecay, RMSprop, clip_by_global_norm

__all__ = [
    "AdaptiveSigmoid", "BatchNorm2d", "Conv2d", "MaxPool2d", "PReLU", "ReplicationPad",
    "Sigmoid", "Upsample", "Network", "Node", "generator", "init_weights", "noise_input",
    "unet", "Adam", "PolynomialDecay", "RMSprop", "clip_by_global_norm",
]
