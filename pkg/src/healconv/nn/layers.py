"""Parameterized layers over the functional ops.

Weights use fan-in-scaled uniform init from a caller-supplied generator, so a
fixed seed reproduces a network bit-for-bit.
"""

from __future__ import annotations

import numpy as np

from .. import patches
from .autodiff import Tensor
from . import functional as F


def _uniform_init(rng, shape, fan_in, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    def params(self):
        return []

    def buffers(self):
        return []


class SphericalConv(Layer):
    def __init__(self, level, c_in, c_out, rng, dtype=np.float32):
        self.grid = patches.patch_grid(level)
        self.w = Tensor(_uniform_init(rng, (3, 3, c_in, c_out), 9 * c_in, dtype), requires_grad=True)
        self.b = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)

    def __call__(self, x, train=False):
        return F.spherical_conv(x, self.w, self.b, self.grid)

    def params(self):
        return [("w", self.w), ("b", self.b)]


class Conv1x1(Layer):
    def __init__(self, c_in, c_out, rng, dtype=np.float32):
        self.w = Tensor(_uniform_init(rng, (c_in, c_out), c_in, dtype), requires_grad=True)
        self.b = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)

    def __call__(self, x, train=False):
        return F.conv1x1(x, self.w, self.b)

    def params(self):
        return [("w", self.w), ("b", self.b)]


class Linear(Layer):
    def __init__(self, n_in, n_out, rng, dtype=np.float32):
        self.w = Tensor(_uniform_init(rng, (n_in, n_out), n_in, dtype), requires_grad=True)
        self.b = Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True)

    def __call__(self, x, train=False):
        return F.linear(x, self.w, self.b)

    def params(self):
        return [("w", self.w), ("b", self.b)]


class SphericalUnpool(Layer):
    def __init__(self, c_in, c_out, rng, dtype=np.float32):
        self.w = Tensor(_uniform_init(rng, (4, c_in, c_out), c_in, dtype), requires_grad=True)
        self.b = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)

    def __call__(self, x, train=False):
        return F.spherical_unpool(x, self.w, self.b)

    def params(self):
        return [("w", self.w), ("b", self.b)]


class BatchNorm(Layer):
    def __init__(self, channels, dtype=np.float32, momentum=0.1, eps=1e-5):
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=np.float64)
        self.running_var = np.ones(channels, dtype=np.float64)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x, train=False):
        return F.batchnorm(x, self.gamma, self.beta, self.running_mean,
                           self.running_var, train, self.momentum, self.eps)

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]


class ReLU(Layer):
    def __call__(self, x, train=False):
        return F.relu(x)


class MaxPool(Layer):
    def __call__(self, x, train=False):
        return F.maxpool1x4(x)


class Flatten(Layer):
    def __call__(self, x, train=False):
        return F.flatten(x)


class GlobalMean(Layer):
    def __call__(self, x, train=False):
        return F.global_mean(x)


class Softmax(Layer):
    def __call__(self, x, train=False):
        return F.softmax(x)
