"""Parameter update rules: classical momentum SGD and bias-corrected Adam.

Both fold weight decay into the gradient (g <- g + wd * p) before the update,
and both refuse to step a parameter whose gradient was never populated.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Tensor


class MissingGradError(RuntimeError):
    """A parameter reached the optimizer without a gradient."""


def _check_grads(params: Sequence[Tensor]):
    for p in params:
        if p.grad is None:
            raise MissingGradError(f"parameter {p.name or '<unnamed>'} has no gradient")


class SGD:
    """Stochastic gradient descent with momentum: v <- m*v + g + wd*p; p <- p - lr*v."""

    def __init__(self, params: Sequence[Tensor], lr: float,
                 momentum: float = 0.9, weight_decay: float = 5e-4):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        _check_grads(self.params)
        for p, v in zip(self.params, self._velocity):
            g = p.grad + self.weight_decay * p.data
            v *= self.momentum
            v += g
            p.data -= self.lr * v

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


class Adam:
    """Adam with bias correction; weight decay folded into the gradient."""

    def __init__(self, params: Sequence[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.99,
                 weight_decay: float = 5e-4, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.weight_decay = weight_decay
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        _check_grads(self.params)
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad + self.weight_decay * p.data
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            mhat = m / b1t
            vhat = v / b2t
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
