"""Realized volatility, spot-volatility windows and quarticity estimators.

Increment indices are 1-based in the docstrings: spot window ``i`` covers
increments ``i .. i+k_n-1`` and is paired with the forward increment
``i+k_n``. Sums use numpy's pairwise reduction.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np


class EstimatorId(str, Enum):
    RV = "RV"
    QUARTIC_NAIVE = "QuarticNaive"
    VBAR = "VBar"
    VBAR_PRIME = "VBarPrime"
    VHAT = "VHat"
    VHAT_PRIME = "VHatPrime"
    GENERAL_G = "GeneralG"
    USTAT = "UStat"


WINDOWED = {
    EstimatorId.VBAR,
    EstimatorId.VBAR_PRIME,
    EstimatorId.VHAT,
    EstimatorId.VHAT_PRIME,
    EstimatorId.GENERAL_G,
}


@dataclass(frozen=True)
class GFunction:
    """A test function together with its first two derivatives."""

    name: str
    g: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]


G_FUNCTIONS = {
    "x": GFunction("x", lambda x: x, np.ones_like, np.zeros_like),
    "x2": GFunction("x2", lambda x: x**2, lambda x: 2.0 * x, lambda x: np.full_like(x, 2.0)),
    "2x2": GFunction("2x2", lambda x: 2.0 * x**2, lambda x: 4.0 * x, lambda x: np.full_like(x, 4.0)),
    "x3": GFunction("x3", lambda x: x**3, lambda x: 3.0 * x**2, lambda x: 6.0 * x),
}

WEIGHTS = {
    "c": lambda c: c,
    "2c": lambda c: 2.0 * c,
}


@dataclass(frozen=True, eq=False)
class IncrementSeries:
    delta_n: float
    values: np.ndarray

    def __post_init__(self):
        if not self.delta_n > 0:
            raise ValueError(f"delta_n must be > 0, got {self.delta_n}")
        if self.values.ndim != 1 or len(self.values) < 1:
            raise ValueError("an increment series needs at least one increment")

    @property
    def N(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class SpotVolSeries:
    k_n: int
    values: np.ndarray


@dataclass(frozen=True)
class EstimatorConfig:
    estimator_id: EstimatorId
    k_n: Optional[int] = None
    g_id: Optional[str] = None
    weight_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "estimator_id", EstimatorId(self.estimator_id))
        if self.estimator_id in WINDOWED and (self.k_n is None or self.k_n < 2):
            raise ValueError(f"{self.estimator_id.value} requires k_n >= 2, got {self.k_n}")
        if self.estimator_id is EstimatorId.GENERAL_G and self.g_id not in G_FUNCTIONS:
            raise ValueError(f"unknown g function {self.g_id!r}; choose from {sorted(G_FUNCTIONS)}")
        if self.estimator_id is EstimatorId.USTAT and self.weight_id not in WEIGHTS:
            raise ValueError(f"unknown weight {self.weight_id!r}; choose from {sorted(WEIGHTS)}")

    @property
    def label(self) -> str:
        if self.estimator_id is EstimatorId.GENERAL_G:
            return f"GeneralG:{self.g_id}"
        if self.estimator_id is EstimatorId.USTAT:
            return f"UStat:{self.weight_id}"
        return self.estimator_id.value

    @classmethod
    def from_label(cls, label: str, k_n: Optional[int] = None) -> "EstimatorConfig":
        """Parse ``"VHatPrime"``, ``"GeneralG:x3"`` or ``"UStat:2c"``."""
        name, _, arg = label.partition(":")
        est = EstimatorId(name)
        if est is EstimatorId.GENERAL_G:
            return cls(est, k_n=k_n, g_id=arg or "x")
        if est is EstimatorId.USTAT:
            return cls(est, weight_id=arg or "c")
        if arg:
            raise ValueError(f"estimator {name} takes no argument, got {label!r}")
        return cls(est, k_n=k_n if est in WINDOWED else None)


@dataclass(frozen=True)
class EstimateResult:
    estimator_id: str
    value: float
    delta_n: float
    k_n: Optional[int]
    N: int


def increments(observations, delta_n: float) -> IncrementSeries:
    obs = np.asarray(observations, dtype=float)
    if obs.ndim != 1 or len(obs) < 2:
        raise ValueError("need at least 2 observations to form increments")
    return IncrementSeries(delta_n=float(delta_n), values=np.diff(obs))


def realized_volatility(inc: IncrementSeries) -> float:
    return float(np.sum(inc.values**2))


def _check_window(inc: IncrementSeries, k_n: int, strict: bool = False) -> None:
    if k_n < 2:
        raise ValueError(f"k_n must be >= 2, got {k_n}")
    if strict and k_n >= inc.N:
        raise ValueError(f"k_n={k_n} must be < N={inc.N} (forward increment needed)")
    if k_n > inc.N:
        raise ValueError(f"k_n={k_n} exceeds the number of increments N={inc.N}")


def spot_vol(inc: IncrementSeries, k_n: int) -> SpotVolSeries:
    """Local variance estimates from ``k_n`` consecutive squared increments.

    Entry ``i-1`` is ``sum_{m=0}^{k_n-1} (Delta_{i+m} X)^2 / (k_n * delta_n)``
    for ``i = 1 .. N-k_n+1``.
    """
    _check_window(inc, k_n)
    windows = np.convolve(inc.values**2, np.ones(k_n), mode="valid")
    return SpotVolSeries(k_n=k_n, values=windows / (k_n * inc.delta_n))


def quarticity_naive(inc: IncrementSeries) -> float:
    """``2/(3 delta_n)`` times the fourth-power sum; the last increment is excluded."""
    if inc.N < 2:
        raise ValueError("quarticity_naive needs N >= 2 increments")
    return float(2.0 / (3.0 * inc.delta_n) * np.sum(inc.values[:-1] ** 4))


def vbar(inc: IncrementSeries, k_n: int) -> float:
    c_hat = spot_vol(inc, k_n).values
    return float(2.0 * inc.delta_n * np.sum(c_hat**2))


def vbar_prime(inc: IncrementSeries, k_n: int) -> float:
    return (1.0 - 2.0 / k_n) * vbar(inc, k_n)


def _vhat_parts(inc: IncrementSeries, k_n: int):
    _check_window(inc, k_n, strict=True)
    c_hat = spot_vol(inc, k_n).values[: inc.N - k_n]
    forward = inc.values[k_n:]
    local = c_hat * inc.delta_n
    return forward**2, local


def vhat(inc: IncrementSeries, k_n: int) -> float:
    """Squared gap between each forward squared increment and its window estimate.

    Windows run over ``i = 1 .. N-k_n`` so that the paired forward
    increment ``i+k_n`` is always observed.
    """
    f2, local = _vhat_parts(inc, k_n)
    return float(np.sum((f2 - local) ** 2) / inc.delta_n)


def vhat_prime(inc: IncrementSeries, k_n: int) -> float:
    f2, local = _vhat_parts(inc, k_n)
    terms = (f2 - local) ** 2 - (2.0 / k_n) * local**2
    return float(np.sum(terms) / inc.delta_n)


def general_g(
    inc: IncrementSeries,
    k_n: int,
    g: Callable[[np.ndarray], np.ndarray],
    g2: Callable[[np.ndarray], np.ndarray],
    bias_factor: float = 1.0,
) -> float:
    """Bias-corrected Riemann sum of ``g`` evaluated at the spot estimates.

    The correction subtracts ``(bias_factor / k_n) * g''(c) * c^2`` per
    window. ``bias_factor = 1`` removes the leading ``O(1/k_n)`` bias and
    reproduces ``vbar_prime`` for ``g(x) = 2x^2``; ``bias_factor = 2``
    gives the doubled correction.
    """
    c_hat = spot_vol(inc, k_n).values
    terms = g(c_hat) - (bias_factor / k_n) * g2(c_hat) * c_hat**2
    if not np.all(np.isfinite(terms)):
        raise ValueError("g evaluation produced non-finite values")
    return float(inc.delta_n * np.sum(terms))


def u_statistic(inc: IncrementSeries, c_ref, weight: Callable[[np.ndarray], np.ndarray]) -> float:
    """Weighted sum of centred squared increments, scaled to be O(1).

    ``sqrt(delta_n) * sum w(c_{i-1}) * ((Delta_i X)^2 / delta_n - c_{i-1})``.
    """
    c_ref = np.asarray(c_ref, dtype=float)
    if c_ref.shape != inc.values.shape:
        raise ValueError(f"c_ref has length {len(c_ref)}, expected N={inc.N}")
    centred = inc.values**2 / inc.delta_n - c_ref
    return float(np.sqrt(inc.delta_n) * np.sum(weight(c_ref) * centred))


def evaluate(
    config: EstimatorConfig,
    inc: IncrementSeries,
    c_ref=None,
    bias_factor: float = 1.0,
) -> EstimateResult:
    """Run one configured estimator on an increment series."""
    est = config.estimator_id
    k = config.k_n
    if est is EstimatorId.RV:
        value = realized_volatility(inc)
    elif est is EstimatorId.QUARTIC_NAIVE:
        value = quarticity_naive(inc)
    elif est is EstimatorId.VBAR:
        value = vbar(inc, k)
    elif est is EstimatorId.VBAR_PRIME:
        value = vbar_prime(inc, k)
    elif est is EstimatorId.VHAT:
        value = vhat(inc, k)
    elif est is EstimatorId.VHAT_PRIME:
        value = vhat_prime(inc, k)
    elif est is EstimatorId.GENERAL_G:
        fn = G_FUNCTIONS[config.g_id]
        value = general_g(inc, k, fn.g, fn.d2, bias_factor)
    else:
        if c_ref is None:
            raise ValueError("UStat needs the true spot variance at left endpoints")
        value = u_statistic(inc, c_ref, WEIGHTS[config.weight_id])
    return EstimateResult(config.label, value, inc.delta_n, k, inc.N)
