"""In-place optimizers over :class:`~fdabnn.autograd.Tensor` parameters."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .autograd import NonFiniteError, Tensor


class Optimizer:
    def __init__(self, params: Iterable[Tensor], lr: float, weight_decay: float = 0.0):
        self.params = list(params)
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = float(lr)
        self.weight_decay = float(weight_decay)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def _grad(self, i: int, p: Tensor) -> np.ndarray:
        if p.grad is None:
            raise ValueError(f"parameter {i} {p.shape} has no gradient")
        g = p.grad
        if self.weight_decay:
            g = g + self.weight_decay * p.data
        return g

    @staticmethod
    def _apply(p: Tensor, update: np.ndarray) -> None:
        new = p.data - update
        if not np.all(np.isfinite(new)):
            raise NonFiniteError(f"non-finite update for parameter of shape {p.shape}")
        p.data[...] = new

    def step(self) -> None:
        raise NotImplementedError

    def state(self) -> dict[str, np.ndarray]:
        return {}


class SGD(Optimizer):
    """SGD with heavy-ball momentum: ``v = mu*v + g; w -= lr*v``."""

    def __init__(self, params, lr: float, momentum: float = 0.0, weight_decay: float = 0.0):
        super().__init__(params, lr, weight_decay)
        self.momentum = float(momentum)
        self.velocity: list[np.ndarray | None] = [None] * len(self.params)

    def step(self) -> None:
        for i, p in enumerate(self.params):
            g = self._grad(i, p)
            if self.momentum:
                v = self.velocity[i]
                v = g.copy() if v is None else self.momentum * v + g
                self.velocity[i] = v
                g = v
            self._apply(p, self.lr * g)


class Adam(Optimizer):
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        super().__init__(params, lr, weight_decay)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = self._grad(i, p)
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            mhat = self.m[i] / c1
            vhat = self.v[i] / c2
            self._apply(p, (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype))


def make_optimizer(kind: str, params, lr: float, momentum: float = 0.9, weight_decay: float = 0.0) -> Optimizer:
    kind = kind.lower()
    if kind == "sgd":
        return SGD(params, lr=lr, momentum=momentum, weight_decay=weight_decay)
    if kind == "adam":
        return Adam(params, lr=lr, weight_decay=weight_decay)
    raise ValueError(f"unknown optimizer {kind!r}")
