"""Probability laws used by the construction: symmetric Weibull, standard
normal (and its half-normal marginal), Rademacher.

Samplers never touch global RNG state.  Each call builds its own generator
from ``(seed, stream)`` so concurrent callers cannot interfere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

SQRT2 = math.sqrt(2.0)
HALF_NORMAL_DENSITY_AT_ZERO = math.sqrt(2.0 / math.pi)


def make_rng(seed: int, stream: int | tuple[int, ...] = 0) -> np.random.Generator:
    """Independent generator for ``stream`` derived from a master ``seed``."""
    if isinstance(stream, tuple):
        entropy = [int(seed), *map(int, stream)]
    else:
        entropy = [int(seed), int(stream)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _check_theta(theta: float) -> float:
    theta = float(theta)
    if not theta > 0 or not math.isfinite(theta):
        raise ValueError(f"Weibull shape must be a positive finite number, got {theta}")
    return theta


def weibull_cdf(theta: float, t):
    """CDF of the symmetric Weibull law W(theta, 1).

    |W| has survival exp(-t**theta) and the sign is a fair coin, so
    F(t) = 1/2 + sgn(t) (1 - exp(-|t|**theta)) / 2.
    """
    theta = _check_theta(theta)
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("weibull_cdf requires finite arguments")
    tail = 0.5 * np.exp(-np.abs(t) ** theta)
    # write each side through its own tail so the lower tail keeps relative precision
    out = np.where(t < 0, tail, 1.0 - tail)
    return out if out.ndim else float(out)


def weibull_pdf(theta: float, t):
    theta = _check_theta(theta)
    a = np.abs(np.asarray(t, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 0.5 * theta * a ** (theta - 1.0) * np.exp(-(a**theta))
    if theta > 1:
        out = np.where(a == 0, 0.0, out)
    return out if out.ndim else float(out)


def weibull_quantile(theta: float, p):
    theta = _check_theta(theta)
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0) | ~(p < 1)):
        raise ValueError("quantile level must lie strictly inside (0, 1)")
    # m = 2 min(p, 1 - p) = exp(-|t|**theta); 1 - p and m - 1 are exact in floating point
    m = 2.0 * np.where(p < 0.5, p, 1.0 - p)
    out = np.sign(p - 0.5) * (-np.log1p(m - 1.0)) ** (1.0 / theta)
    return out if out.ndim else float(out)


def weibull_sample(theta: float, seed: int, n: int, stream: int = 0, dtype=np.float64) -> np.ndarray:
    """I.i.d. draws from W(theta, 1) by inversion.

    |W| = E**(1/theta) with E ~ Exp(1) is the closed-form inverse of the
    half-law; the sign comes from an independent fair bit.
    """
    theta = _check_theta(theta)
    if n < 1:
        raise ValueError("sample size must be >= 1")
    rng = make_rng(seed, stream)
    return _weibull_draw(rng, theta, n, dtype)


def _weibull_draw(rng: np.random.Generator, theta: float, size, dtype=np.float64) -> np.ndarray:
    u = rng.random(size, dtype=dtype)
    # u in [0, 1): fold onto a magnitude uniform in (0, 1] and a sign
    sign = np.where(u < 0.5, -1.0, 1.0).astype(dtype)
    mag_u = np.abs(2.0 * u - 1.0).astype(dtype)
    mag_u = np.where(mag_u >= 1.0, np.nextafter(dtype(1.0), dtype(0.0)), mag_u)
    with np.errstate(divide="ignore"):
        magnitude = (-np.log1p(-mag_u)) ** dtype(1.0 / theta)
    return sign * magnitude


def rademacher_sample(seed: int, n: int, stream: int = 0) -> np.ndarray:
    if n < 1:
        raise ValueError("sample size must be >= 1")
    rng = make_rng(seed, stream)
    return rng.integers(0, 2, size=n).astype(float) * 2.0 - 1.0


def std_normal_cdf(z):
    z = np.asarray(z, dtype=float)
    out = special.ndtr(z)
    return out if out.ndim else float(out)


def std_normal_pdf(z):
    z = np.asarray(z, dtype=float)
    out = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return out if out.ndim else float(out)


def half_normal_cdf(z):
    """CDF of |G| for G ~ N(0, 1); zero on the negative axis."""
    z = np.asarray(z, dtype=float)
    out = np.where(z > 0, special.erf(np.maximum(z, 0.0) / SQRT2), 0.0)
    return out if out.ndim else float(out)


def half_normal_logsf(z):
    """log P(|G| > z), accurate deep in the tail."""
    z = np.asarray(z, dtype=float)
    out = math.log(2.0) + special.log_ndtr(-z)
    return out if out.ndim else float(out)


def std_normal_sample(seed: int, n: int, stream: int = 0) -> np.ndarray:
    if n < 1:
        raise ValueError("sample size must be >= 1")
    return make_rng(seed, stream).standard_normal(n)


def standardize(samples) -> np.ndarray:
    """Shift to zero mean and scale to unit corrected (n - 1) std."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("standardize needs a 1-D sample with at least two values")
    mu = x.mean()
    sd = x.std(ddof=1)
    if not sd > 0:
        raise ValueError("cannot standardize a sample with zero variance")
    return (x - mu) / sd


@dataclass(frozen=True)
class SymmetricWeibull:
    """The initialization law W(theta, 1)."""

    theta: float

    def __post_init__(self):
        _check_theta(self.theta)

    def cdf(self, t):
        return weibull_cdf(self.theta, t)

    def pdf(self, t):
        return weibull_pdf(self.theta, t)

    def quantile(self, p):
        return weibull_quantile(self.theta, p)

    def sample(self, seed: int, n: int, stream: int = 0) -> np.ndarray:
        return weibull_sample(self.theta, seed, n, stream)

    def abs_logsf(self, t):
        """log P(|W| > t) = -t**theta (exact GWT(theta) tail)."""
        return -np.abs(np.asarray(t, dtype=float)) ** self.theta

    @property
    def second_moment(self) -> float:
        return math.gamma(1.0 + 2.0 / self.theta)

    @property
    def inverse_moment(self) -> float:
        """E[1/|W|] = Gamma(1 - 1/theta), finite for theta > 1."""
        if self.theta <= 1:
            return math.inf
        return math.gamma(1.0 - 1.0 / self.theta)


class StdNormal:
    """Unit Gaussian law with its half-normal marginal."""

    cdf = staticmethod(std_normal_cdf)
    pdf = staticmethod(std_normal_pdf)
    abs_cdf = staticmethod(half_normal_cdf)
    abs_logsf = staticmethod(half_normal_logsf)
    abs_density_at_zero = HALF_NORMAL_DENSITY_AT_ZERO

    @staticmethod
    def sample(seed: int, n: int, stream: int = 0) -> np.ndarray:
        return std_normal_sample(seed, n, stream)
