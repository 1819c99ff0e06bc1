"""Euler-Maruyama simulation of continuous Ito semimartingales.

Paths live on a fine uniform grid with ``n * substeps`` steps; the
estimators only ever see the coarse observation grid returned by
:func:`observe`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from numba import njit

MAX_GRID_POINTS = 2**31 - 1


@dataclass(frozen=True)
class ConstantVol:
    c: float = 1.0

    def validate(self) -> None:
        if not (math.isfinite(self.c) and self.c >= 0):
            raise ValueError(f"constant volatility requires c >= 0, got c={self.c}")


@dataclass(frozen=True)
class SinusoidVol:
    """Deterministic spot variance ``a + m * sin(2*pi*s / period)``."""

    base: float
    amplitude: float
    period: float

    def validate(self) -> None:
        if not self.base > abs(self.amplitude):
            raise ValueError(
                f"sinusoid requires base > |amplitude| (got base={self.base}, "
                f"amplitude={self.amplitude})"
            )
        if not self.period > 0:
            raise ValueError(f"sinusoid requires period > 0, got {self.period}")

    def spot(self, times: np.ndarray) -> np.ndarray:
        return self.base + self.amplitude * np.sin(2.0 * np.pi * times / self.period)


@dataclass(frozen=True)
class HestonVol:
    kappa: float
    theta: float
    xi: float
    rho: float
    c0: float

    def validate(self) -> None:
        for name in ("kappa", "theta", "xi", "c0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"heston requires {name} > 0, got {getattr(self, name)}")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"heston requires rho in [-1, 1], got {self.rho}")
        if 2.0 * self.kappa * self.theta < self.xi**2:
            raise ValueError(
                "heston violates the Feller condition 2*kappa*theta >= xi^2 "
                f"({2.0 * self.kappa * self.theta} < {self.xi**2})"
            )


Volatility = Union[ConstantVol, SinusoidVol, HestonVol]


@dataclass(frozen=True)
class ModelSpec:
    """Drift rate ``b`` (zero or constant) and a spot-variance model."""

    volatility: Volatility = field(default_factory=ConstantVol)
    drift: float = 0.0

    def validate(self) -> None:
        if not math.isfinite(self.drift):
            raise ValueError(f"drift must be finite, got {self.drift}")
        self.volatility.validate()

    @property
    def default_substeps(self) -> int:
        return 10 if isinstance(self.volatility, HestonVol) else 1


@dataclass(frozen=True)
class SamplingSpec:
    t: float
    n: int
    substeps: int = 1

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"horizon t must be > 0, got {self.t}")
        if self.n < 2:
            raise ValueError(f"observation count n must be >= 2, got {self.n}")
        if self.substeps < 1:
            raise ValueError(f"substeps must be >= 1, got {self.substeps}")
        if self.n * self.substeps + 1 > MAX_GRID_POINTS:
            raise ValueError(
                f"fine grid of {self.n * self.substeps + 1} points exceeds array limit"
            )

    @property
    def delta_n(self) -> float:
        return self.t / self.n

    @property
    def fine_step(self) -> float:
        return self.delta_n / self.substeps

    @property
    def fine_steps(self) -> int:
        return self.n * self.substeps


@dataclass(frozen=True, eq=False)
class SimulatedPath:
    times: np.ndarray
    x: np.ndarray
    c: np.ndarray
    seed: int
    sampling: SamplingSpec

    def __post_init__(self):
        for arr in (self.times, self.x, self.c):
            arr.setflags(write=False)


def derive_seed(master_seed: int, replication: int) -> int:
    """64-bit seed for one replication, independent of execution order."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(replication,))
    return int(ss.generate_state(1, np.uint64)[0])


@njit(cache=True, nogil=True)
def _heston_kernel(z1, z2, dt, drift, kappa, theta, xi, rho, c0):
    steps = z1.shape[0]
    x = np.empty(steps + 1)
    c = np.empty(steps + 1)
    x[0] = 0.0
    c[0] = c0
    sdt = math.sqrt(dt)
    rho_perp = math.sqrt(1.0 - rho * rho)
    for k in range(steps):
        ck = c[k] if c[k] > 0.0 else 0.0
        eta = rho * z1[k] + rho_perp * z2[k]
        x[k + 1] = x[k] + drift * dt + math.sqrt(ck) * sdt * z1[k]
        nxt = c[k] + kappa * (theta - ck) * dt + xi * math.sqrt(ck) * sdt * eta
        c[k + 1] = nxt if nxt > 0.0 else 0.0
    return x, c


def simulate_path(model: ModelSpec, sampling: SamplingSpec, seed: int) -> SimulatedPath:
    """Simulate ``X`` (with ``X_0 = 0``) and its spot variance on the fine grid.

    Constant and sinusoid variance are evaluated exactly at grid times and
    ``X`` is advanced by Euler-Maruyama with the left-point variance. Heston
    variance uses full-truncation Euler with correlation ``rho`` between the
    two driving Brownian motions.
    """
    model.validate()
    steps = sampling.fine_steps
    dt = sampling.fine_step
    times = np.arange(steps + 1) * dt
    rng = np.random.Generator(np.random.PCG64(seed))
    vol = model.volatility

    if isinstance(vol, HestonVol):
        z = rng.standard_normal((steps, 2))
        x, c = _heston_kernel(
            np.ascontiguousarray(z[:, 0]), np.ascontiguousarray(z[:, 1]),
            dt, float(model.drift), vol.kappa, vol.theta, vol.xi, vol.rho, vol.c0,
        )
    else:
        if isinstance(vol, ConstantVol):
            c = np.full(steps + 1, float(vol.c))
        else:
            c = vol.spot(times)
        xi = rng.standard_normal(steps)
        x = np.empty(steps + 1)
        x[0] = 0.0
        np.cumsum(model.drift * dt + np.sqrt(c[:-1] * dt) * xi, out=x[1:])

    return SimulatedPath(times=times, x=x, c=c, seed=seed, sampling=sampling)


def observe(path: SimulatedPath) -> np.ndarray:
    """Values of ``X`` on the observation grid ``i * delta_n``."""
    return path.x[:: path.sampling.substeps].copy()


def observed_spot(path: SimulatedPath) -> np.ndarray:
    """True spot variance at the left endpoint of every observed increment."""
    return path.c[: -1 : path.sampling.substeps].copy()


def integrate_path(
    path: SimulatedPath,
    func: Callable[[np.ndarray], np.ndarray],
    start: Optional[float] = None,
    stop: Optional[float] = None,
) -> float:
    """Trapezoidal integral of ``func(c_s)`` over ``[start, stop]``.

    Endpoints off the fine grid are handled by linear interpolation of the
    integrand.
    """
    values = np.asarray(func(path.c), dtype=float)
    times = path.times
    if start is None and stop is None:
        return float(np.trapezoid(values, dx=path.sampling.fine_step))
    lo = times[0] if start is None else start
    hi = times[-1] if stop is None else stop
    if not times[0] <= lo <= hi <= times[-1]:
        raise ValueError(f"integration span [{lo}, {hi}] outside the simulated horizon")
    inner = times[(times > lo) & (times < hi)]
    points = np.concatenate(([lo], inner, [hi]))
    return float(np.trapezoid(np.interp(points, times, values), points))


class PathIntegrator:
    """Cached cumulative trapezoid integrals of powers of ``c`` over one path.

    Agrees with :func:`integrate_path` up to rounding; used where many spans
    and powers are needed per path.
    """

    def __init__(self, path: SimulatedPath):
        self.times = path.times
        self.c = path.c
        self.step = path.sampling.fine_step
        self._cum = {}

    def _cumulative(self, p: int) -> np.ndarray:
        if p not in self._cum:
            v = self.c**p
            cum = np.empty_like(v)
            cum[0] = 0.0
            np.cumsum(0.5 * self.step * (v[:-1] + v[1:]), out=cum[1:])
            self._cum[p] = (v, cum)
        return self._cum[p]

    def _at(self, p: int, u: float) -> float:
        v, cum = self._cumulative(p)
        j = min(int(u / self.step), len(v) - 2)
        frac = u - self.times[j]
        vu = v[j] + (v[j + 1] - v[j]) * frac / self.step
        return cum[j] + 0.5 * frac * (v[j] + vu)

    def power(self, p: int, start: float = 0.0, stop: Optional[float] = None) -> float:
        if stop is None:
            stop = float(self.times[-1])
        return float(self._at(p, stop) - self._at(p, start))


def true_integrated_power(
    path: SimulatedPath,
    p: int,
    start: Optional[float] = None,
    stop: Optional[float] = None,
) -> float:
    """Trapezoidal approximation of the integral of ``c_s ** p``."""
    if p < 1:
        raise ValueError(f"power must be a positive integer, got {p}")
    return integrate_path(path, lambda c: c**p, start, stop)
