"""One-sample Kolmogorov-Smirnov test with the asymptotic Kolmogorov threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .distributions import std_normal_cdf


@dataclass(frozen=True)
class KsResult:
    statistic: float
    sample_size: int
    alpha: float
    threshold: float

    @property
    def reject(self) -> bool:
        return self.statistic > self.threshold

    def as_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "sample_size": self.sample_size,
            "alpha": self.alpha,
            "threshold": self.threshold,
            "reject": self.reject,
        }


def ks_statistic(samples, cdf=std_normal_cdf) -> float:
    """sup |F_s - F| from the sorted sample (exact for continuous F)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 1:
        raise ValueError("need at least one sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    x = np.sort(x)
    s = x.size
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, s + 1)
    upper = np.max(i / s - f)
    lower = np.max(f - (i - 1) / s)
    return float(min(1.0, max(upper, lower, 0.0)))


def kolmogorov_cdf(x: float) -> float:
    """P(K <= x) = 1 - 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 x^2)."""
    if x <= 0:
        return 0.0
    total = 0.0
    j = 1
    while True:
        term = math.exp(-2.0 * j * j * x * x)
        total += term if j % 2 else -term
        if term < 1e-12:
            break
        j += 1
    return 1.0 - 2.0 * total


@lru_cache(maxsize=None)
def kolmogorov_quantile(alpha: float) -> float:
    """K_alpha with P(K <= K_alpha) = 1 - alpha, by bisection."""
    if not 0 < alpha <= 0.5:
        raise ValueError("alpha must lie in (0, 0.5]")
    # the alternating series is unreliable for tiny x, but K_alpha >= 0.8 here
    lo, hi = 0.5, 5.0
    target = 1.0 - alpha
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if kolmogorov_cdf(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14:
            break
    return 0.5 * (lo + hi)


def ks_threshold(s: int, alpha: float = 0.05) -> float:
    if s < 1:
        raise ValueError("sample size must be >= 1")
    return kolmogorov_quantile(alpha) / math.sqrt(s)


def ks_test(samples, cdf=std_normal_cdf, alpha: float = 0.05) -> KsResult:
    """Reject when the statistic exceeds K_alpha / sqrt(s)."""
    x = np.asarray(samples, dtype=float).ravel()
    stat = ks_statistic(x, cdf)
    return KsResult(stat, int(x.size), float(alpha), ks_threshold(x.size, alpha))
