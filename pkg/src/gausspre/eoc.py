"""Edge-of-Chaos analysis under the Gaussian pre-activation hypothesis.

The variance map V(v) = sw^2 E[phi(sqrt(v) Z)^2] + sb^2 and the correlation
map C(c, va, vb) drive a mean-field picture of signal propagation.  This
module evaluates them by quadrature, locates and classifies the fixed points
of V, estimates the slope chi1 = C*'(1) and solves for the (sb, sw) curve
where chi1 = 1.  It also hosts the oscillating activation phi_{delta,omega}
whose variance map has infinitely many stable fixed points.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .quadrature import (
    HermiteRule,
    gauss_expect_1d,
    gauss_expect_2d,
    log_rule,
    polar_rule,
)

log = logging.getLogger(__name__)

PHASES = ("ordered", "chaotic", "edge")
EDGE_TOL = 1e-3
V_STAR_MIN = 1e-6
V_STAR_MAX = 1e4

# Default rules for the maps.  Both resolve non-smooth behaviour at the
# origin (ReLU kink, power-type table terms, log-scale oscillation) and stay
# accurate at large variances, where Gauss-Hermite of order 64/128 loses
# digits.
MAP_RULE_1D = log_rule()
MAP_RULE_2D = polar_rule()


class NoFixedPointError(ValueError):
    """Raised when the variance map has no usable nonzero fixed point.

    ``direction`` is ``"collapse"`` when iterates shrink to 0 and
    ``"explode"`` when they grow without bound.
    """

    def __init__(self, message: str, direction: str):
        super().__init__(message)
        self.direction = direction


# -- activations ------------------------------------------------------------


class Activation:
    """Named pointwise function with the quadrature rules that suit it."""

    name = "activation"
    rule_1d: HermiteRule | None = None
    rule_2d: HermiteRule | None = None

    def __call__(self, x):
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class _Elementary(Activation):
    def __init__(self, name, fn):
        self.name = name
        self._fn = fn

    def __call__(self, x):
        return self._fn(np.asarray(x, dtype=float))


tanh = _Elementary("tanh", np.tanh)
relu = _Elementary("relu", lambda x: np.maximum(x, 0.0))
identity = _Elementary("identity", lambda x: x)

ELEMENTARY = {"tanh": tanh, "relu": relu, "identity": identity}


def phi_delta_omega(delta: float, omega: float, x):
    """x * exp((delta/omega) sin(omega ln|x|)), continuous with value 0 at 0."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    live = ax > 1e-300
    safe = np.where(live, ax, 1.0)
    out = np.where(live, x * np.exp(delta / omega * np.sin(omega * np.log(safe))), 0.0)
    return out if out.ndim else float(out)


class PhiDeltaOmega(Activation):
    """Monotone odd activation oscillating in log scale (0 <= delta <= 1)."""

    def __init__(self, delta: float, omega: float):
        if not 0.0 <= delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if not omega > 0:
            raise ValueError("omega must be positive")
        self.delta = float(delta)
        self.omega = float(omega)
        self.name = f"phi_delta_omega(delta={delta:g},omega={omega:g})"

    def __call__(self, x):
        return phi_delta_omega(self.delta, self.omega, x)


def sigma_omega(delta: float, omega: float) -> float:
    """Weight std placing the phi_{delta,omega} variance map between its
    lower and upper envelopes, which yields infinitely many crossings of the
    identity (sb = 0).
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    if not omega > 0:
        raise ValueError("omega must be positive")
    rule = log_rule()
    pos = rule.nodes > 0
    z = rule.nodes[pos]
    w = rule.weights[pos]
    osc = 2.0 * delta / omega * np.sin(omega * np.log(z))
    v_low = 2.0 * np.sum(w * z * z * np.exp(-osc))
    v_upp = 2.0 * np.sum(w * z * z * np.exp(osc))
    return math.sqrt(2.0 / (v_low + v_upp))


# -- maps -------------------------------------------------------------------


@dataclass(frozen=True)
class EocSetting:
    sigma_w: float
    sigma_b: float
    activation: Activation

    def __post_init__(self):
        if not self.sigma_w > 0:
            raise ValueError("sigma_w must be positive")
        if not self.sigma_b >= 0:
            raise ValueError("sigma_b must be non-negative")

    @property
    def rule_1d(self) -> HermiteRule:
        return self.activation.rule_1d or MAP_RULE_1D

    @property
    def rule_2d(self) -> HermiteRule:
        return self.activation.rule_2d or MAP_RULE_2D

    def with_sigma_w(self, sigma_w: float) -> "EocSetting":
        return EocSetting(sigma_w, self.sigma_b, self.activation)


def variance_map(v: float, setting: EocSetting, rule: HermiteRule | None = None) -> float:
    if v < 0:
        raise ValueError("variance must be non-negative")
    phi = setting.activation
    second = gauss_expect_1d(lambda x: phi(x) ** 2, v, rule or setting.rule_1d)
    return setting.sigma_w**2 * second + setting.sigma_b**2


def correlation_map(c: float, va: float, vb: float, setting: EocSetting) -> float:
    """One-layer update of the correlation between two inputs.

    The normalising variances are taken with the same rule as the cross
    moment so that c = 1 maps exactly to 1 when va = vb.
    """
    if va <= 0 or vb <= 0:
        raise ValueError("variances must be positive")
    phi = setting.activation
    rule = setting.rule_2d
    sw2, sb2 = setting.sigma_w**2, setting.sigma_b**2
    cross = gauss_expect_2d(lambda x, y: phi(x) * phi(y), va, vb, c, rule)
    qa = sw2 * gauss_expect_2d(lambda x, y: phi(x) * phi(y), va, va, 1.0, rule) + sb2
    qb = sw2 * gauss_expect_2d(lambda x, y: phi(x) * phi(y), vb, vb, 1.0, rule) + sb2
    return (sw2 * cross + sb2) / math.sqrt(qa * qb)


def iterate_variance(setting: EocSetting, v0: float = 1.0, max_iter: int = 10_000):
    """Run v <- V(v) until |dv| < 1e-10 max(1, v); returns (v, converged, n)."""
    v = float(v0)
    for n in range(1, max_iter + 1):
        nxt = variance_map(v, setting)
        if abs(nxt - v) < 1e-10 * max(1.0, v):
            return nxt, True, n
        v = nxt
        if not math.isfinite(v):
            break
    return v, False, max_iter


# -- fixed points -----------------------------------------------------------


@dataclass(frozen=True)
class FixedPoint:
    v: float
    stable: bool
    slope: float


@dataclass
class FixedPointReport:
    points: list[FixedPoint] = field(default_factory=list)
    degenerate: bool = False
    v_range: tuple[float, float] = (0.0, 0.0)

    @property
    def stable(self) -> list[FixedPoint]:
        return [p for p in self.points if p.stable]

    @property
    def unstable(self) -> list[FixedPoint]:
        return [p for p in self.points if not p.stable]


def _slope(setting: EocSetting, v: float) -> float:
    h = 1e-5 * v
    return (variance_map(v + h, setting) - variance_map(v - h, setting)) / (2 * h)


def find_fixed_points(
    setting: EocSetting, v_min: float = 1e-3, v_max: float = 10.0, resolution: int = 400
) -> FixedPointReport:
    """Scan V(v) - v on a log grid, refine each sign change by bisection."""
    if not 0 < v_min < v_max:
        raise ValueError("need 0 < v_min < v_max")
    grid = np.geomspace(v_min, v_max, resolution)
    gap = np.array([variance_map(v, setting) - v for v in grid])
    report = FixedPointReport(v_range=(v_min, v_max))
    if np.all(np.abs(gap) <= 1e-9 * grid):
        report.degenerate = True
        report.points = [FixedPoint(float(v), False, 1.0) for v in grid]
        return report
    for i in range(resolution - 1):
        a, b = grid[i], grid[i + 1]
        ga, gb = gap[i], gap[i + 1]
        if ga == 0.0:
            root = a
        elif ga * gb < 0:
            root = _bisect_root(setting, a, b, ga)
        else:
            continue
        slope = _slope(setting, root)
        report.points.append(FixedPoint(float(root), bool(-1.0 < slope < 1.0), float(slope)))
    return report


def _bisect_root(setting, a, b, ga, max_iter=200):
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        gm = variance_map(m, setting) - m
        if abs(gm) < 1e-11 * m or b - a < 1e-15 * m:
            return m
        if gm * ga < 0:
            b = m
        else:
            a, ga = m, gm
    return 0.5 * (a + b)


def select_v_star(
    setting: EocSetting,
    prefer: float = 1.0,
    v_min: float = V_STAR_MIN,
    v_max: float = V_STAR_MAX,
    override: float | None = None,
) -> float:
    """Nonzero stable fixed point of V nearest (in log scale) to ``prefer``."""
    if override is not None:
        return float(override)
    report = find_fixed_points(setting, v_min, v_max, resolution=240)
    if report.degenerate:
        return float(prefer)
    candidates = report.stable
    if not candidates:
        grows = variance_map(v_max, setting) > v_max
        raise NoFixedPointError(
            f"no stable nonzero fixed point in [{v_min:g}, {v_max:g}] for {setting}",
            "explode" if grows else "collapse",
        )
    best = min(candidates, key=lambda p: abs(math.log(p.v / prefer)))
    return best.v


def correlation_map_star(c: float, setting: EocSetting, v_star: float | None = None) -> float:
    if v_star is None:
        v_star = select_v_star(setting)
    return correlation_map(c, v_star, v_star, setting)


def chi1(setting: EocSetting, v_star: float | None = None, h: float = 1e-4) -> float:
    """Slope of C* at c = 1 by one-sided differences with Richardson steps.

    An activation with a kink at the origin puts a (1 - c)^(3/2) term in
    C*, so the difference quotient D(h) carries errors a sqrt(h) + b h; the
    steps h, h/2, h/4 remove both (a = 0 for smooth activations).
    """
    if v_star is None:
        v_star = select_v_star(setting)
    one = correlation_map_star(1.0, setting, v_star)

    def diff(step):
        return (one - correlation_map_star(1.0 - step, setting, v_star)) / step

    d1, d2, d4 = diff(h), diff(h / 2), diff(h / 4)
    r = math.sqrt(2.0)
    half_a = (r * d2 - d1) / (r - 1.0)
    half_b = (r * d4 - d2) / (r - 1.0)
    return 2.0 * half_b - half_a


def phase_classify(setting: EocSetting, tol: float = EDGE_TOL) -> str:
    slope = chi1(setting)
    if abs(slope - 1.0) <= tol:
        return "edge"
    return "ordered" if slope < 1.0 else "chaotic"


# -- EOC curve ----------------------------------------------------------------


@dataclass(frozen=True)
class EocPoint:
    sigma_b: float
    sigma_w: float
    v_star: float
    chi1: float


def _side(setting: EocSetting) -> tuple[float, float | None, float | None]:
    """Sign of chi1 - 1, with collapse counted as ordered and blow-up as chaotic."""
    try:
        v_star = select_v_star(setting)
    except NoFixedPointError as err:
        return (-1.0 if err.direction == "collapse" else 1.0), None, None
    slope = chi1(setting, v_star)
    return math.copysign(1.0, slope - 1.0) if slope != 1.0 else 0.0, v_star, slope


def eoc_point(
    activation: Activation, sigma_b: float, bracket=(0.05, 10.0), tol: float = EDGE_TOL, xtol: float = 1e-10
) -> EocPoint:
    """Solve chi1(sw) = 1 at fixed sb by bisection on sw."""
    lo, hi = bracket
    s_lo, _, _ = _side(EocSetting(lo, sigma_b, activation))
    s_hi, _, _ = _side(EocSetting(hi, sigma_b, activation))
    if s_lo == s_hi and s_lo != 0.0:
        raise ValueError(f"chi1 - 1 does not change sign on sigma_w in [{lo}, {hi}] at sigma_b={sigma_b}")
    sign_lo = s_lo
    best = None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s_mid, v_star, slope = _side(EocSetting(mid, sigma_b, activation))
        if v_star is not None:
            best = (mid, v_star, slope)
        if s_mid == 0.0:
            break
        if s_mid == sign_lo:
            lo = mid
        else:
            hi = mid
        if hi - lo < xtol * max(1.0, mid):
            break
    sw = 0.5 * (lo + hi)
    s_fin, v_star, slope = _side(EocSetting(sw, sigma_b, activation))
    if v_star is None and best is not None and abs(best[0] - sw) < 1e-6:
        sw, v_star, slope = best
    if v_star is not None and v_star > 0.5 * V_STAR_MAX:
        raise ValueError(f"fixed point escapes to infinity at sigma_b={sigma_b} (v*={v_star:.3g})")
    if v_star is None or abs(slope - 1.0) > tol:
        raise ValueError(
            f"bisection at sigma_b={sigma_b} ended at sigma_w={sw:.6g} without |chi1 - 1| <= {tol}"
        )
    return EocPoint(float(sigma_b), float(sw), float(v_star), float(slope))


def eoc_curve(activation: Activation, sigma_b_grid, bracket=(0.05, 10.0), tol: float = EDGE_TOL):
    """EOC points over ``sigma_b_grid``; failed grid points go to ``warnings``."""
    points, warnings = [], []
    for sb in sigma_b_grid:
        try:
            points.append(eoc_point(activation, float(sb), bracket, tol))
        except ValueError as err:
            log.warning("EOC point omitted: %s", err)
            warnings.append({"sigma_b": float(sb), "reason": str(err)})
    return points, warnings
