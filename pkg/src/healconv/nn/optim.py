"""Momentum SGD (the training experiments never need more)."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError
from .autodiff import Tensor


def sgd_step(params, grads, lr, momentum=0.0, weight_decay=0.0, velocities=None):
    """One deterministic momentum-SGD update on plain arrays.

    ``v = momentum * v + grad + weight_decay * param; param -= lr * v``.
    Returns the velocity list for the next call.  Non-finite gradients abort.
    """
    if velocities is None:
        velocities = [np.zeros_like(p) for p in params]
    for p, g, v in zip(params, grads, velocities):
        if not np.isfinite(g).all():
            raise NumericError("non-finite gradient encountered in sgd_step")
        v *= momentum
        v += g
        if weight_decay:
            v += weight_decay * p
        p -= lr * v
    return velocities


class SGD:
    """Stateful wrapper around :func:`sgd_step` for Tensor parameters."""

    def __init__(self, params, lr, momentum=0.9, weight_decay=0.0):
        self.params: list[Tensor] = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocities = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        grads = []
        for p in self.params:
            if p.grad is None:
                grads.append(np.zeros_like(p.data))
            else:
                grads.append(p.grad)
        sgd_step([p.data for p in self.params], grads, self.lr,
                 self.momentum, self.weight_decay, self._velocities)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
