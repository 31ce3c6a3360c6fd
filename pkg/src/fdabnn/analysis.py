"""Numerical checks on the Fourier surrogate: truncation error, spectra, gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .surrogates import fda_derivative, fda_partial_sum, sign_forward, signswish_forward, tanh_forward

SPECTRUM_FUNCTIONS = ("sign", "fda", "tanh", "signswish")


def square_wave(t, omega: float = math.pi) -> np.ndarray:
    """Odd unit square wave of period 2*pi/omega; -1 at its zeros, like sign."""
    return sign_forward(np.sin(omega * np.asarray(t, dtype=np.float64)))


def parseval_mse(n: int) -> float:
    """Energy left outside the first n+1 odd harmonics of the unit square wave."""
    k = 2 * np.arange(n + 1) + 1
    return 1.0 - 8.0 / math.pi ** 2 * float(np.sum(1.0 / k ** 2))


def _period_grid(period: float, samples: int) -> np.ndarray:
    # half-step offset keeps nodes off the jumps at 0 and +/- period/2
    h = period / samples
    return -period / 2 + h / 2 + h * np.arange(samples + 1)


def _period_mean(values: np.ndarray, t: np.ndarray, period: float) -> float:
    return float(np.trapezoid(values, t) / period)


def fs_mse(n: int, omega: float = math.pi, samples: int = 20_000) -> float:
    """Mean squared gap between square wave and its n-term partial sum over a period."""
    if samples < 10_000:
        raise ValueError("use at least 1e4 samples")
    period = 2 * math.pi / omega
    t = _period_grid(period, samples)
    r = square_wave(t, omega) - fda_partial_sum(t, n, omega)
    return _period_mean(r * r, t, period)


def residual(t, n: int, omega: float = math.pi) -> np.ndarray:
    return square_wave(t, omega) - fda_partial_sum(np.asarray(t, dtype=np.float64), n, omega)


def derivative_sign_changes(n: int, omega: float = math.pi, samples: int = 10_000) -> int:
    """Sign changes of the surrogate gradient on a uniform scan of (0, T/2)."""
    half = math.pi / omega
    t = np.linspace(0, half, samples + 2)[1:-1]
    d = fda_derivative(t, n, omega)
    s = np.sign(d)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


@dataclass
class SpectrumReport:
    """Projection coefficients of one period onto sin/cos(i*omega*t)."""

    function: str
    period: float
    sample_count: int
    harmonics: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def sine(self) -> np.ndarray:
        return np.array([h[1] for h in self.harmonics])

    @property
    def cosine(self) -> np.ndarray:
        return np.array([h[2] for h in self.harmonics])

    def deltas(self, reference: "SpectrumReport") -> list[tuple[int, float, float]]:
        """Per harmonic: (index, amplitude difference, energy difference)."""
        out = []
        for (i, b, a), (_, rb, ra) in zip(self.harmonics, reference.harmonics):
            amp = math.hypot(b, a) - math.hypot(rb, ra)
            energy = (b * b + a * a) - (rb * rb + ra * ra)
            out.append((i, amp, energy))
        return out


def _evaluate(function: str, t: np.ndarray, omega: float, n: int, beta: float) -> np.ndarray:
    if function == "sign":
        return square_wave(t, omega)
    if function == "fda":
        return fda_partial_sum(t, n, omega)
    if function == "tanh":
        return tanh_forward(t, beta)
    if function == "signswish":
        return signswish_forward(t, beta)
    raise ValueError(f"unknown function {function!r}; expected one of {SPECTRUM_FUNCTIONS}")


def spectrum(function: str, period: float = 2.0, max_harmonic: int = 32, *, n: int = 10,
             beta: float = 1.0, samples: int = 1 << 14) -> SpectrumReport:
    """Fourier projection of ``function`` restricted to one period centred on 0.

    ``tanh`` and ``signswish`` are taken on [-T/2, T/2] and extended
    periodically, matching how they stand in for sign on that window.
    """
    if max_harmonic < 1:
        raise ValueError("max_harmonic must be >= 1")
    omega = 2 * math.pi / period
    t = _period_grid(period, samples)
    f = _evaluate(function, t, omega, n, beta)
    # keep the closing node consistent with the periodic extension
    f[-1] = f[0]
    report = SpectrumReport(function, period, samples)
    for i in range(1, max_harmonic + 1):
        b = 2 * _period_mean(f * np.sin(i * omega * t), t, period)
        a = 2 * _period_mean(f * np.cos(i * omega * t), t, period)
        report.harmonics.append((i, b, a))
    return report


def finite_diff_check(fn: Callable[[np.ndarray], float], analytic, point, eps: float = 1e-6,
                      order: int = 2) -> float:
    """Largest relative gap between ``analytic`` and a central difference of ``fn``.

    ``analytic`` is the gradient array at ``point`` (or a callable producing
    it). ``order`` 2 uses the two-point stencil, 4 the five-point stencil.
    Relative error per coordinate is ``|g - fd| / max(|g|, 1e-12)``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    x = np.array(point, dtype=np.float64)
    g = np.asarray(analytic(x) if callable(analytic) else analytic, dtype=np.float64)
    if g.shape != x.shape:
        raise ValueError(f"analytic gradient shape {g.shape} != point shape {x.shape}")
    fd = np.empty_like(x)
    flat, fdf = x.reshape(-1), fd.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]

        def f_at(delta):
            flat[j] = orig + delta
            val = float(fn(x))
            flat[j] = orig
            return val

        if order == 2:
            fdf[j] = (f_at(eps) - f_at(-eps)) / (2 * eps)
        elif order == 4:
            # paired differences so a flat direction gives exactly zero
            fdf[j] = (8 * (f_at(eps) - f_at(-eps)) - (f_at(2 * eps) - f_at(-2 * eps))) / (12 * eps)
        else:
            raise ValueError("order must be 2 or 4")
        if not math.isfinite(fdf[j]):
            raise FloatingPointError(f"non-finite function value near coordinate {j}")
    err = np.abs(g - fd) / np.maximum(np.abs(g), 1e-12)
    return float(err.max())
