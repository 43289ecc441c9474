"""Mellin transforms of the half-normal and half-Weibull laws and the
Laguerre-series inversion of their ratio.

The ratio M f_|G| / M f_|W| is the Mellin transform of the density of |Y|
that would make W * Y standard normal.  Inverting it through the Laguerre
expansion is numerically hopeless: the coefficients are alternating sums of
huge terms, and the cancellation destroys them long before they settle.
This module computes them anyway (in float64 and in double-double) so that
the failure can be observed and measured.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import special

PRECISION_MODES = ("float64", "extended")

# |L_k(x)| <= exp(x/2) gives |c_{k+1}| <= E[exp(|Y|/4)] / 2, which is below 1
# for any unit-variance |Y| with a sub-Gaussian tail; larger values can only
# come from rounding.
DEFAULT_BLOWUP = 1.0


def _log_mellin_half_normal(s):
    return 0.5 * (s - 1.0) * math.log(2.0) + special.gammaln(0.5 * s) - 0.5 * math.log(math.pi)


def mellin_half_normal(s):
    """E[|G|^(s-1)] = 2^((s-1)/2) Gamma(s/2) / sqrt(pi)."""
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)):
        raise ValueError("Mellin transform of the half-normal needs s > 0")
    out = np.exp(_log_mellin_half_normal(s))
    return out if out.ndim else float(out)


def _weibull_gamma_arg(s, theta):
    arg = (s - 1.0) / theta + 1.0
    if np.any(~(arg > 0)):
        raise ValueError("(s - 1)/theta + 1 must be positive (gamma pole region)")
    return arg


def mellin_half_weibull(s, theta: float):
    """E[|W|^(s-1)] = Gamma((s-1)/theta + 1)."""
    s = np.asarray(s, dtype=float)
    out = special.gamma(_weibull_gamma_arg(s, theta))
    return out if out.ndim else float(out)


def target_ratio(s, theta: float):
    """Mellin transform of the density of |Y|, formed as a log-gamma difference."""
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)):
        raise ValueError("target_ratio needs s > 0")
    arg = _weibull_gamma_arg(s, theta)
    out = np.exp(_log_mellin_half_normal(s) - special.gammaln(arg))
    return out if out.ndim else float(out)


# -- double-double helpers ----------------------------------------------------


def two_sum(a: float, b: float) -> tuple[float, float]:
    """Error-free transformation: a + b = s + e exactly."""
    s = a + b
    bb = s - a
    e = (a - (s - bb)) + (b - bb)
    return s, e


def dd_add(x: tuple[float, float], y: tuple[float, float]) -> tuple[float, float]:
    s, e = two_sum(x[0], y[0])
    e += x[1] + y[1]
    return two_sum(s, e)


def _dd_from_mp(x) -> tuple[float, float]:
    hi = float(x)
    return hi, float(x - hi)


# -- Laguerre coefficients ----------------------------------------------------


@dataclass
class LaguerreSeries:
    theta: float
    coefficients: np.ndarray  # c_1 .. c_K
    precision_mode: str
    blowup_bound: float
    divergence_index: int | None

    @property
    def K(self) -> int:
        return int(self.coefficients.size)

    @property
    def usable(self) -> int:
        """Number of leading coefficients kept for evaluation."""
        if self.divergence_index is None:
            return self.K
        return self.divergence_index - 1


def _log_abs_terms(k: int, theta: float) -> np.ndarray:
    n = np.arange(1, k + 1, dtype=float)
    log_binom = special.gammaln(k) - special.gammaln(n) - special.gammaln(k - n + 1)
    log_f = _log_mellin_half_normal(n) - special.gammaln((n - 1.0) / theta + 1.0)
    return log_binom + log_f - n * math.log(2.0) - special.gammaln(n)


def _coefficient_float64(k: int, theta: float) -> float:
    signs = np.where(np.arange(k) % 2 == 0, 1.0, -1.0)
    return float(np.sum(signs * np.exp(_log_abs_terms(k, theta))))


def _coefficient_extended(k: int, theta: float, cache: dict) -> float:
    total = (0.0, 0.0)
    for n in range(1, k + 1):
        if n not in cache:
            half = mpmath.mpf(n) / 2
            f = mpmath.power(2, (n - 1) * mpmath.mpf(0.5)) * mpmath.gamma(half) / mpmath.sqrt(mpmath.pi)
            f /= mpmath.gamma(mpmath.mpf(n - 1) / theta + 1)
            cache[n] = f / (mpmath.power(2, n) * mpmath.factorial(n - 1))
        term = mpmath.binomial(k - 1, n - 1) * cache[n]
        if n % 2 == 0:
            term = -term
        total = dd_add(total, _dd_from_mp(term))
    return total[0] + total[1]


def laguerre_coefficients(
    theta: float, K: int, precision_mode: str = "float64", blowup_bound: float = DEFAULT_BLOWUP
) -> LaguerreSeries:
    """c_k = sum_n binom(k-1, n-1) (-1)^(n-1) f(n) / (2^n Gamma(n)), k = 1..K.

    ``float64`` forms each term from log-gammas and sums in machine
    precision.  ``extended`` evaluates each term to ~40 digits and sums in
    double-double arithmetic.  ``divergence_index`` is the first k with
    |c_k| > blowup_bound.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if precision_mode not in PRECISION_MODES:
        raise ValueError(f"precision_mode must be one of {PRECISION_MODES}")
    theta = float(theta)
    coeffs = np.empty(K)
    if precision_mode == "float64":
        for k in range(1, K + 1):
            coeffs[k - 1] = _coefficient_float64(k, theta)
    else:
        cache: dict = {}
        with mpmath.workdps(40):
            for k in range(1, K + 1):
                coeffs[k - 1] = _coefficient_extended(k, theta, cache)
    bad = np.nonzero(~np.isfinite(coeffs) | (np.abs(coeffs) > blowup_bound))[0]
    divergence = int(bad[0]) + 1 if bad.size else None
    return LaguerreSeries(theta, coeffs, precision_mode, float(blowup_bound), divergence)


def laguerre_inverse_eval(series: LaguerreSeries, z, terms: int | None = None):
    """exp(-z/2) sum_k c_{k+1} L_k(z/2) over the usable coefficients."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("inverse is evaluated on z >= 0")
    n = series.usable if terms is None else min(terms, series.usable)
    x = 0.5 * z
    total = np.zeros_like(x)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    for k in range(n):
        total = total + series.coefficients[k] * cur
        prev, cur = cur, ((2 * k + 1 - x) * cur - k * prev) / (k + 1)
    out = np.exp(-x) * total
    return out if out.ndim else float(out)
