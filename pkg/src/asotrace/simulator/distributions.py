"""Sampling distributions fitted to published summary statistics.

Only means, medians and maxima are available for most quantities, so the
right-skewed ones are modelled as log-normals pinned to the (mean, median)
pair. When a cap applies, sigma is re-solved so the mean of the *capped*
variable still hits the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

DAY = 86400.0


def _capped_lognormal_mean(mu: float, sigma: float, cap: float | None) -> float:
    if cap is None or not math.isfinite(cap):
        return math.exp(mu + sigma * sigma / 2)
    if sigma == 0:
        return min(math.exp(mu), cap)
    z = (math.log(cap) - mu) / sigma
    body = math.exp(mu + sigma * sigma / 2) * stats.norm.cdf(z - sigma)
    return body + cap * stats.norm.sf(z)


@dataclass(frozen=True)
class LogNormal:
    mu: float
    sigma: float
    cap: float | None = None
    floor: float = 0.0

    @classmethod
    def fit(cls, mean: float, median: float, cap: float | None = None, floor: float = 0.0) -> "LogNormal":
        """Log-normal with the given median whose (capped) mean equals ``mean``."""
        if median <= 0 or mean <= 0:
            raise ValueError("mean and median must be positive")
        if mean < median:
            raise ValueError(f"right-skewed fit needs mean >= median (got {mean} < {median})")
        mu = math.log(median)
        if mean == median:
            return cls(mu, 0.0, cap, floor)
        if cap is not None and cap <= mean:
            raise ValueError("cap must exceed the target mean")

        def gap(sigma: float) -> float:
            return _capped_lognormal_mean(mu, sigma, cap) - mean

        hi = 1.0
        while gap(hi) < 0:
            hi *= 2
            if hi > 64:
                raise ValueError("cannot reach target mean under this cap")
        return cls(mu, optimize.brentq(gap, 1e-9, hi, xtol=1e-12), cap, floor)

    @property
    def median(self) -> float:
        return math.exp(self.mu)

    @property
    def mean(self) -> float:
        return _capped_lognormal_mean(self.mu, self.sigma, self.cap)

    def sample(self, rng: np.random.Generator, size=None):
        x = rng.lognormal(self.mu, self.sigma, size) if self.sigma > 0 else np.full(size or (), math.exp(self.mu))
        if self.cap is not None:
            x = np.minimum(x, self.cap)
        return np.maximum(x, self.floor)

    def sample_int(self, rng: np.random.Generator, minimum: int = 0) -> int:
        return max(minimum, int(round(float(self.sample(rng)))))


@dataclass(frozen=True)
class PoissonLogNormal:
    """Overdispersed count: Poisson with a log-normally distributed rate."""

    rate: LogNormal

    @classmethod
    def fit(cls, mean: float, median: float, cap: float | None = None) -> "PoissonLogNormal":
        return cls(LogNormal.fit(mean, median, cap))

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.poisson(float(self.rate.sample(rng))))


@dataclass(frozen=True)
class ReviewDelay:
    """Install-to-review delay in seconds.

    A share ``quick`` of reviews lands within the first day (uniform over it);
    the rest is log-normal, fitted so the overall median and mean match the
    targets and the overall maximum is ``cap``.
    """

    quick: float
    rest: LogNormal

    @classmethod
    def fit(cls, mean_days: float, median_days: float, quick: float, cap_days: float) -> "ReviewDelay":
        if not 0 <= quick < 0.5:
            raise ValueError("quick share must be in [0, 0.5)")
        # the rest component must place (0.5 - quick) / (1 - quick) of its mass below the median
        q = (0.5 - quick) / (1 - quick)
        zq = stats.norm.ppf(q)
        quick_mean = 0.5

        def solve(sigma: float) -> float:
            mu = math.log(median_days) - zq * sigma
            rest_mean = _capped_lognormal_mean(mu, sigma, cap_days)
            return quick * quick_mean + (1 - quick) * rest_mean - mean_days

        hi = 0.5
        while solve(hi) < 0:
            hi *= 1.5
            if hi > 20:
                raise ValueError("cannot fit review delay")
        sigma = optimize.brentq(solve, 1e-6, hi, xtol=1e-12)
        mu = math.log(median_days) - zq * sigma
        return cls(quick, LogNormal(mu, sigma, cap_days))

    def sample_days(self, rng: np.random.Generator, size: int) -> np.ndarray:
        quick = rng.random(size) < self.quick
        out = self.rest.sample(rng, size)
        out[quick] = rng.uniform(1.0 / 1440, 1.0, int(quick.sum()))
        return out

    def sample_seconds(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.maximum(1, np.round(self.sample_days(rng, size) * DAY)).astype(np.int64)


@dataclass(frozen=True)
class Beta:
    a: float
    b: float

    def sample(self, rng: np.random.Generator, size=None):
        return rng.beta(self.a, self.b, size)


def correlated_lognormals(rng: np.random.Generator, first: LogNormal, second: LogNormal,
                          rho: float) -> tuple[float, float]:
    """One draw from two log-normals whose underlying normals have correlation ``rho``."""
    z1 = rng.standard_normal()
    z2 = rho * z1 + math.sqrt(1 - rho * rho) * rng.standard_normal()
    x1 = math.exp(first.mu + first.sigma * z1)
    x2 = math.exp(second.mu + second.sigma * z2)
    if first.cap is not None:
        x1 = min(x1, first.cap)
    if second.cap is not None:
        x2 = min(x2, second.cap)
    return x1, x2
