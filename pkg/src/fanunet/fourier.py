"""Truncated Fourier series: coefficients by quadrature and partial-sum evaluation.

These are plain float64 numerics used as reference oracles for the FAN layers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class FourierSeries:
    period: float
    a0: float
    a: np.ndarray = field(default_factory=lambda: np.zeros(1))
    b: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.period <= 0:
            raise ValueError(f"period must be positive, got {self.period}")
        if self.a.shape != self.b.shape or self.a.ndim != 1 or self.a.size < 1:
            raise ValueError("a and b must be equal-length 1-D coefficient arrays with N >= 1")

    @property
    def n_terms(self) -> int:
        return self.a.size


def fourier_coefficients(
    f: Callable[[np.ndarray], np.ndarray], period: float, n_terms: int, quadrature_points: int = 8192
) -> FourierSeries:
    """Project ``f`` onto the first ``n_terms`` harmonics of ``period``.

    Uses the composite trapezoid rule on ``quadrature_points`` panels over one period.
    ``a0`` is the period mean; ``a_n``, ``b_n`` carry the 2/T normalization so that
    :func:`fourier_eval` reconstructs ``f``.
    """
    if period <= 0:
        raise ValueError(f"period must be positive, got {period}")
    if n_terms < 1:
        raise ValueError(f"need at least one harmonic, got {n_terms}")
    if quadrature_points < 64 * n_terms:
        raise ValueError(f"quadrature_points={quadrature_points} < 64 * n_terms = {64 * n_terms}")

    x = np.linspace(0.0, period, quadrature_points + 1)
    fx = np.asarray(f(x), dtype=np.float64)
    n = np.arange(1, n_terms + 1)[:, None]
    arg = 2.0 * np.pi * n * x[None, :] / period
    a0 = np.trapezoid(fx, x) / period
    a = 2.0 / period * np.trapezoid(fx * np.cos(arg), x, axis=1)
    b = 2.0 / period * np.trapezoid(fx * np.sin(arg), x, axis=1)
    return FourierSeries(period, float(a0), a, b)


def fourier_eval(series: FourierSeries, x):
    """Partial sum a0 + sum_n a_n cos(2 pi n x / T) + b_n sin(2 pi n x / T)."""
    x = np.asarray(x, dtype=np.float64)
    n = np.arange(1, series.n_terms + 1)
    arg = 2.0 * np.pi * np.multiply.outer(x, n) / series.period
    out = series.a0 + np.cos(arg) @ series.a + np.sin(arg) @ series.b
    return float(out) if out.ndim == 0 else out


def square_wave(x):
    """Unit square wave of period 2 pi: sign(sin x)."""
    return np.sign(np.sin(x))
