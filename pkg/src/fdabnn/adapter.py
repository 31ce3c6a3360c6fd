"""Learned error-compensation branch added to the sign surrogate.

For a row batch ``t`` of width ``d`` the adapter computes::

    e(t) = relu(t @ W1) @ W2 + eta(t)

and a sign node with adapter emits ``z = sign(t) + alpha * e(t)`` while
back-propagating through ``surrogate'(t) + alpha * e'(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autograd import ShapeError, Tensor, custom_node
from .surrogates import SurrogateSpec, binary_sign, sign_forward, surrogate_backward

ETA_KINDS = ("zero", "linear", "sine")


def hidden_width(d: int, k: int) -> int:
    return max(1, math.ceil(d / k))


class NoiseAdapter:
    """Two bottleneck FC layers with ReLU plus a fixed shortcut ``eta``."""

    def __init__(self, d: int, k: int = 64, eta_kind: str = "sine", a: float = 0.1,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if k < 1:
            raise ValueError("reduction factor k must be >= 1")
        if eta_kind not in ETA_KINDS:
            raise ValueError(f"eta_kind must be one of {ETA_KINDS}")
        rng = rng if rng is not None else np.random.default_rng(0)
        h = hidden_width(d, k)
        bound = 1.0 / math.sqrt(d)
        self.d, self.k, self.eta_kind, self.a = d, k, eta_kind, float(a)
        self.W1 = Tensor(rng.uniform(-bound, bound, size=(d, h)).astype(dtype), requires_grad=True)
        self.W2 = Tensor(np.zeros((h, d), dtype=dtype), requires_grad=True)

    @classmethod
    def from_weights(cls, W1, W2, eta_kind: str = "zero", a: float = 0.1) -> "NoiseAdapter":
        W1, W2 = np.asarray(W1), np.asarray(W2)
        if W1.ndim != 2 or W2.ndim != 2 or W1.shape[1] != W2.shape[0] or W1.shape[0] != W2.shape[1]:
            raise ShapeError(f"adapter weights {W1.shape} and {W2.shape} do not compose")
        obj = cls.__new__(cls)
        obj.d = W1.shape[0]
        obj.k = max(1, W1.shape[0] // W1.shape[1])
        obj.eta_kind, obj.a = eta_kind, float(a)
        obj.W1 = Tensor(W1, requires_grad=True)
        obj.W2 = Tensor(W2, requires_grad=True)
        return obj

    def parameters(self) -> list[Tensor]:
        return [self.W1, self.W2]

    def num_parameters(self) -> int:
        return self.W1.size + self.W2.size

    def eta(self, t: np.ndarray) -> np.ndarray:
        if self.eta_kind == "zero":
            return np.zeros_like(t)
        if self.eta_kind == "linear":
            return self.a * t
        return self.a * np.sin(t)

    def eta_prime(self, t: np.ndarray) -> np.ndarray:
        if self.eta_kind == "zero":
            return np.zeros_like(t)
        if self.eta_kind == "linear":
            return np.full_like(t, self.a)
        return self.a * np.cos(t)


def _rows(t: np.ndarray, adapter: NoiseAdapter) -> np.ndarray:
    t = np.asarray(t)
    if t.ndim != 2 or t.shape[1] != adapter.W1.shape[0]:
        raise ShapeError(f"adapter expects rows of width {adapter.W1.shape[0]}, got {t.shape}")
    return t


def adapter_forward(t, adapter: NoiseAdapter) -> np.ndarray:
    t = _rows(t, adapter)
    return np.maximum(t @ adapter.W1.data, 0) @ adapter.W2.data + adapter.eta(t)


def composite_forward(t, adapter: NoiseAdapter | None, alpha: float) -> np.ndarray:
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    z = sign_forward(t)
    if adapter is None or alpha == 0:
        return z
    return z + alpha * adapter_forward(t, adapter)


def composite_backward(upstream, t, adapter: NoiseAdapter, alpha: float,
                       surrogate: SurrogateSpec, pre: np.ndarray | None = None):
    """Hand-derived gradients of the adapter-augmented sign node.

    Returns ``(grad_t, grad_W1, grad_W2)``. The adapter branch of all three is
    scaled by ``alpha``; ``pre`` is the saved ``t @ W1`` if available.
    """
    t = _rows(t, adapter)
    upstream = np.asarray(upstream)
    if upstream.shape != t.shape:
        raise ShapeError(f"upstream {upstream.shape} does not match input {t.shape}")
    W1, W2 = adapter.W1.data, adapter.W2.data
    grad_t = surrogate_backward(surrogate, upstream, t)
    if alpha == 0:
        return grad_t, np.zeros_like(W1), np.zeros_like(W2)
    if pre is None:
        pre = t @ W1
    # alpha folded into the narrow (rows x hidden) factors
    gate = (upstream @ W2.T) * (pre >= 0) * alpha
    grad_t = grad_t + gate @ W1.T + (alpha * upstream) * adapter.eta_prime(t)
    grad_W1 = t.T @ gate
    grad_W2 = np.ascontiguousarray((np.maximum(pre, 0) * alpha).T) @ upstream
    return grad_t, grad_W1, grad_W2


def composite_sign(t: Tensor, surrogate: SurrogateSpec, adapter: NoiseAdapter | None,
                   alpha: float) -> Tensor:
    """Tape node over row batch ``t``: composite forward, hand-derived backward."""
    if adapter is None:
        return binary_sign(t, surrogate)
    saved: dict[str, np.ndarray] = {}

    def forward(x, w1, w2):
        z = sign_forward(x)
        if alpha == 0:
            return z
        pre = x @ w1
        saved["pre"] = pre
        return z + alpha * (np.maximum(pre, 0) @ w2 + adapter.eta(x))

    def backward(g, x, w1, w2):
        return composite_backward(g, x, adapter, alpha, surrogate, saved.get("pre"))

    return custom_node(forward, backward, t, adapter.W1, adapter.W2, name=f"composite[{surrogate.kind}]")


@dataclass(frozen=True)
class AlphaSchedule:
    """Linear decay of the adapter weight to exactly zero at ``total_epochs``."""

    alpha0: float = 0.1
    total_epochs: int = 1

    def __post_init__(self):
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be positive")
        if self.alpha0 < 0:
            raise ValueError("alpha0 must be non-negative")


def alpha_at(epoch: int, schedule: AlphaSchedule) -> float:
    if not 0 <= epoch <= schedule.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {schedule.total_epochs}]")
    if epoch == schedule.total_epochs:
        return 0.0
    return schedule.alpha0 * (1 - epoch / schedule.total_epochs)
