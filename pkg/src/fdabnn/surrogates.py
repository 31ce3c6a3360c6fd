"""Sign forward rule and the backward rules that stand in for its derivative.

The Fourier estimator uses the odd-harmonic partial sum of a unit square wave
with radian frequency ``omega``::

    s_n(t)  = 4/pi * sum_{i=0..n} sin((2i+1) omega t) / (2i+1)
    s_n'(t) = 4 omega/pi * sum_{i=0..n} cos((2i+1) omega t)

With the default ``omega = pi`` the period is 2, so the square wave agrees with
``sign`` on ``|t| < 1``; callers clip surrogate inputs to ``[-1, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autograd import NonFiniteError, ShapeError, Tensor, custom_node

KINDS = ("ste", "fda", "tanh", "signswish")
STE_VARIANTS = ("clip", "gated")


@dataclass
class SurrogateSpec:
    """Which backward rule a sign node uses.

    ``n`` is the only field a schedule may change after construction.
    """

    kind: str = "fda"
    n: int = 10
    omega: float = math.pi
    beta: float = 1.0
    ste_variant: str = "clip"

    def __post_init__(self):
        kind = self.kind.lower()
        aliases = {"tanhalike": "tanh", "tanh_alike": "tanh", "ss": "signswish"}
        object.__setattr__(self, "kind", aliases.get(kind, kind))
        if self.kind not in KINDS:
            raise ValueError(f"unknown surrogate kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "fda" and (self.n < 0 or self.omega <= 0):
            raise ValueError("fda surrogate needs n >= 0 and omega > 0")
        if self.kind in ("tanh", "signswish") and self.beta <= 0:
            raise ValueError("baseline surrogate needs beta > 0")
        if self.ste_variant not in STE_VARIANTS:
            raise ValueError(f"ste_variant must be one of {STE_VARIANTS}")

    def __setattr__(self, name, value):
        if name == "kind" and "kind" in self.__dict__:
            raise AttributeError("surrogate kind is fixed once constructed")
        if name == "n" and value < 0:
            raise ValueError("n must be non-negative")
        object.__setattr__(self, name, value)

    def period(self) -> float:
        return 2 * math.pi / self.omega


@dataclass(frozen=True)
class FourierCoefficients:
    """Trigonometric series coefficients; ``a[i-1]``, ``b[i-1]`` hold harmonic ``i``."""

    a0: float
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    @classmethod
    def square_wave(cls, max_harmonic: int) -> "FourierCoefficients":
        i = np.arange(1, max_harmonic + 1)
        b = np.where(i % 2 == 1, 4.0 / (i * np.pi), 0.0)
        return cls(0.0, np.zeros(max_harmonic), b)


def _finite(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t)
    if not np.all(np.isfinite(t)):
        raise NonFiniteError("surrogate input holds NaN or Inf")
    return t


def _same_shape(upstream: np.ndarray, t: np.ndarray) -> None:
    if np.shape(upstream) != np.shape(t):
        raise ShapeError(f"upstream {np.shape(upstream)} does not match input {np.shape(t)}")


def sign_forward(t) -> np.ndarray:
    """+1 where t > 0 and -1 elsewhere, zero included."""
    t = _finite(t)
    dtype = t.dtype if t.dtype.kind == "f" else np.float64
    return np.where(t > 0, 1, -1).astype(dtype)


def ste_backward(upstream, t, variant: str = "clip") -> np.ndarray:
    """Straight-through gradient.

    ``clip`` clamps the incoming gradient value to [-1, 1]; ``gated`` passes the
    gradient where ``|t| <= 1`` and zeroes it elsewhere.
    """
    upstream, t = np.asarray(upstream), np.asarray(t)
    _same_shape(upstream, t)
    if variant == "clip":
        return np.clip(upstream, -1, 1)
    if variant == "gated":
        return upstream * (np.abs(t) <= 1)
    raise ValueError(f"unknown STE variant {variant!r}")


def fda_partial_sum(t, n: int, omega: float = math.pi) -> np.ndarray:
    t = _finite(t)
    out = np.zeros_like(t, dtype=t.dtype if t.dtype.kind == "f" else np.float64)
    for i in range(n + 1):
        k = 2 * i + 1
        out += np.sin(k * omega * t) / k
    return out * (4 / math.pi)


def fda_derivative(t, n: int, omega: float = math.pi) -> np.ndarray:
    t = _finite(t)
    out = np.zeros_like(t, dtype=t.dtype if t.dtype.kind == "f" else np.float64)
    for i in range(n + 1):
        out += np.cos((2 * i + 1) * omega * t)
    return out * (4 * omega / math.pi)


def fda_backward(upstream, t, n: int, omega: float = math.pi) -> np.ndarray:
    upstream, t = np.asarray(upstream), np.asarray(t)
    _same_shape(upstream, t)
    return upstream * fda_derivative(t, n, omega)


def tanh_forward(t, beta: float = 1.0) -> np.ndarray:
    return np.tanh(beta * np.asarray(t))


def signswish_forward(t, beta: float = 1.0) -> np.ndarray:
    u = beta * np.asarray(t)
    s = _logistic(u)
    return 2 * s * (1 + u * (1 - s)) - 1


def _logistic(u: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(u, dtype=u.dtype if u.dtype.kind == "f" else np.float64)
    pos = u >= 0
    out[pos] = 1 / (1 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1 + e)
    return out


def baseline_backward(kind: str, upstream, t, beta: float = 1.0) -> np.ndarray:
    """Spatial-domain baselines: DSQ-style tanh and BNN+-style SignSwish."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    upstream, t = np.asarray(upstream), _finite(t)
    _same_shape(upstream, t)
    kind = {"tanhalike": "tanh", "tanh_alike": "tanh"}.get(kind.lower(), kind.lower())
    if kind == "tanh":
        th = np.tanh(beta * t)
        return upstream * beta * (1 - th * th)
    if kind == "signswish":
        u = beta * t
        s = _logistic(u)
        return upstream * (2 * beta * s * (1 - s) * (2 + u * (1 - 2 * s)))
    raise ValueError(f"unknown baseline kind {kind!r}")


def surrogate_backward(spec: SurrogateSpec, upstream, t) -> np.ndarray:
    if spec.kind == "ste":
        return ste_backward(upstream, t, spec.ste_variant)
    if spec.kind == "fda":
        return fda_backward(upstream, t, spec.n, spec.omega)
    return baseline_backward(spec.kind, upstream, t, spec.beta)


def relaxed_forward(spec: SurrogateSpec, t) -> np.ndarray:
    """Smooth function whose derivative is the surrogate (identity for STE)."""
    if spec.kind == "fda":
        return fda_partial_sum(t, spec.n, spec.omega)
    if spec.kind == "tanh":
        return tanh_forward(t, spec.beta)
    if spec.kind == "signswish":
        return signswish_forward(t, spec.beta)
    return np.asarray(t).copy()


def binary_sign(t: Tensor, spec: SurrogateSpec) -> Tensor:
    """Tape node: sign forward, ``spec``'s surrogate backward."""
    return custom_node(
        sign_forward,
        lambda g, x: surrogate_backward(spec, g, x),
        t,
        name=f"sign[{spec.kind}]",
    )
