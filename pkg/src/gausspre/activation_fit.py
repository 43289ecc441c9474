"""Activation construction for Weibull-initialized networks.

If W ~ W(theta, 1) and X ~ N(0, 1) are independent, we want phi_theta with
W * phi_theta(X) ~ N(0, 1).  Writing Y = phi_theta(X), the density of |Y|
is approximated by a four-parameter family g, fitted so that the CDF of
|W| |Y| (a product convolution) matches the half-normal CDF in sup norm.
The activation is then the quantile map phi_theta = F_Y^{-1} o F_G.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import special
from scipy.interpolate import PchipInterpolator

from .distributions import (
    HALF_NORMAL_DENSITY_AT_ZERO,
    half_normal_cdf,
    half_normal_logsf,
    make_rng,
    std_normal_cdf,
)
from .eoc import Activation
from .quadrature import polar_rule

log = logging.getLogger(__name__)

SHIPPED_THETAS = (2.05, 2.5, 3.0, 4.0, 5.0, 7.0, 10.0)
TABLE_VERSION = 1
TABLE_TAG = "gausspre-activation"


class FitDivergedError(ArithmeticError):
    """Non-finite loss during optimization; ``diagnostic`` holds the state."""

    def __init__(self, message: str, diagnostic: dict):
        super().__init__(message)
        self.diagnostic = diagnostic


def theta_conjugate(theta: float) -> float:
    """theta' with 1/theta + 1/theta' = 1/2; the tail exponent of |Y|."""
    theta = float(theta)
    if not theta > 2:
        raise ValueError(f"theta must exceed 2, got {theta}")
    return 1.0 / (0.5 - 1.0 / theta)


def density_at_zero(theta: float) -> float:
    """f_|Y|(0) forced by matching f_|G|(0): sqrt(2/pi) / Gamma(1 - 1/theta)."""
    return HALF_NORMAL_DENSITY_AT_ZERO / math.gamma(1.0 - 1.0 / theta)


# -- density family -------------------------------------------------------------


@dataclass(frozen=True)
class DensityModel:
    """g(x) = gamma alpha x^(alpha-1)/l1^alpha exp(-(x/l1)^alpha)
    + g0 exp(-(x/l2)^theta'), with g0 = density_at_zero(theta).

    The first term vanishes at 0 when alpha > 1, so g(0) = g0 whatever the
    parameters.  ``theta_prime`` defaults to the conjugate of ``theta``; the
    optimizer overrides it while annealing.
    """

    theta: float
    alpha: float
    gamma: float
    lambda1: float
    lambda2: float
    theta_prime_override: float | None = None

    def __post_init__(self):
        theta_conjugate(self.theta)
        if min(self.alpha, self.gamma, self.lambda1, self.lambda2) <= 0:
            raise ValueError("all density parameters must be positive")

    @property
    def theta_prime(self) -> float:
        if self.theta_prime_override is not None:
            return self.theta_prime_override
        return theta_conjugate(self.theta)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.alpha, self.gamma, self.lambda1, self.lambda2])

    @classmethod
    def from_log(cls, theta: float, log_params, theta_prime: float | None = None) -> "DensityModel":
        a, g, l1, l2 = np.exp(np.asarray(log_params, dtype=float))
        return cls(theta, float(a), float(g), float(l1), float(l2), theta_prime)

    def __call__(self, x):
        return g_lambda(self, x)

    # closed-form tail masses of the two terms
    def _tail_mass(self, y):
        y = np.asarray(y, dtype=float)
        tp = self.theta_prime
        first = self.gamma * np.exp(-((y / self.lambda1) ** self.alpha))
        scale = density_at_zero(self.theta) * self.lambda2 * math.gamma(1.0 + 1.0 / tp)
        second = scale * special.gammaincc(1.0 / tp, (y / self.lambda2) ** tp)
        return first + second

    def _log_tail_mass(self, y):
        """log of _tail_mass, finite far beyond the underflow point."""
        y = np.asarray(y, dtype=float)
        tp = self.theta_prime
        a = 1.0 / tp
        x = (y / self.lambda2) ** tp
        q = special.gammaincc(a, x)
        with np.errstate(divide="ignore"):
            # Q(a, x) ~ x^(a-1) e^(-x) / Gamma(a) once it underflows
            log_q = np.where(q > 1e-280, np.log(np.maximum(q, 1e-300)), (a - 1.0) * np.log(x) - x - special.gammaln(a))
        log_scale = math.log(density_at_zero(self.theta) * self.lambda2 * math.gamma(1.0 + a))
        first = math.log(self.gamma) - (y / self.lambda1) ** self.alpha
        return np.logaddexp(first, log_scale + log_q)

    def mass(self, upper: float = math.inf) -> float:
        """Integral of g over [0, upper]."""
        return float(self._tail_mass(0.0) - (0.0 if math.isinf(upper) else self._tail_mass(upper)))


def g_lambda(model: DensityModel, x, theta_prime: float | None = None):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("g is defined on x >= 0")
    tp = model.theta_prime if theta_prime is None else theta_prime
    a, l1 = model.alpha, model.lambda1
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        first = model.gamma * a * x ** (a - 1.0) / l1**a * np.exp(-((x / l1) ** a))
    if a > 1:
        first = np.where(x == 0, 0.0, first)
    out = first + density_at_zero(model.theta) * np.exp(-((x / model.lambda2) ** tp))
    return out if out.ndim else float(out)


# -- loss -----------------------------------------------------------------------


@dataclass(frozen=True)
class LossGrid:
    """Discretisation of the sup-norm CDF loss.

    The product integral runs over t in [t_min, t_trunc] on a log-spaced
    trapezoid grid, with g renormalised to unit mass on that interval.
    """

    t_min: float = 1e-6
    t_trunc: float = 12.0
    points: int = 3000
    z_max: float = 5.0
    d: int = 200


class LossKernel:
    """Precomputed pieces of the loss for one theta.

    The kernel K[z, t] = 1 - exp(-(z/t)^theta) does not depend on the
    density parameters, so each loss evaluation is one mat-vec.
    """

    def __init__(self, theta: float, grid: LossGrid | None = None):
        self.theta = float(theta)
        self.grid = grid = grid or LossGrid()
        r = np.linspace(math.log(grid.t_min), math.log(grid.t_trunc), grid.points)
        self.t = np.exp(r)
        w = np.full(r.size, r[1] - r[0])
        w[[0, -1]] *= 0.5
        self.tw = self.t * w
        self.z = np.linspace(0.0, grid.z_max, grid.d)
        with np.errstate(divide="ignore"):
            u = self.z[:, None] / self.t[None, :]
        self.kernel = -np.expm1(-(u**self.theta))
        self.target = half_normal_cdf(self.z)
        self._g0 = density_at_zero(self.theta)

    def _weights(self, log_params, theta_prime):
        a, gm, l1, l2 = np.exp(log_params)
        t = self.t
        with np.errstate(all="ignore"):
            g = gm * a * t ** (a - 1.0) / l1**a * np.exp(-((t / l1) ** a))
            g = g + self._g0 * np.exp(-((t / l2) ** theta_prime))
        gw = g * self.tw
        return gw, gw.sum()

    def cdf(self, log_params, theta_prime: float) -> np.ndarray:
        gw, m = self._weights(log_params, theta_prime)
        return self.kernel @ gw / m

    def cdf_at(self, i: int, log_params, theta_prime: float) -> float:
        gw, m = self._weights(log_params, theta_prime)
        return float(self.kernel[i] @ gw / m)

    def residual(self, log_params, theta_prime: float) -> np.ndarray:
        return self.cdf(log_params, theta_prime) - self.target

    def loss(self, log_params, theta_prime: float) -> float:
        res = self.residual(log_params, theta_prime)
        if not np.all(np.isfinite(res)):
            return math.nan
        return float(np.max(np.abs(res)))


def fit_loss(model: DensityModel, grid: LossGrid | None = None) -> float:
    """sup_z |F_hat(z) - F_|G|(z)| on z in {0, ..., z_max}."""
    kernel = LossKernel(model.theta, grid)
    return kernel.loss(np.log(model.params), model.theta_prime)


# -- optimizer ------------------------------------------------------------------


class Adam:
    """Adam on a small parameter vector."""

    def __init__(self, size: int, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        m_hat = self.m / (1 - self.b1**self.t)
        v_hat = self.v / (1 - self.b2**self.t)
        return x - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class PlateauScheduler:
    """Divide the learning rate by ``factor`` after ``patience`` epochs
    without a relative improvement of ``threshold``, then wait ``cooldown``.
    """

    def __init__(self, optimizer: Adam, factor: float, patience: int, threshold: float, cooldown: int):
        self.opt = optimizer
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.cooldown = cooldown
        self.best = math.inf
        self.bad = 0
        self.wait = 0

    def step(self, metric: float) -> None:
        if self.wait > 0:
            self.wait -= 1
        if metric < self.best * (1 - self.threshold):
            self.best = metric
            self.bad = 0
            return
        self.bad += 1
        if self.wait == 0 and self.bad > self.patience:
            self.opt.lr /= self.factor
            self.wait = self.cooldown
            self.bad = 0


@dataclass(frozen=True)
class FitConfig:
    epochs: int = 100
    steps_per_epoch: int = 300
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    fd_step: float = 1e-4
    anneal_epochs: int = 50
    lr_factor: float = 10 ** (1 / 3)
    patience: int = 20
    plateau_threshold: float = 0.01
    cooldown: int = 20
    init: tuple[float, float, float, float] = (3.0, 1.0, 1.0, 1.0)
    init_jitter: float = 0.0
    grid: LossGrid = field(default_factory=LossGrid)


@dataclass
class FitResult:
    model: DensityModel
    loss: float
    trace: list[dict]
    seed: int
    config: FitConfig


def _annealed_theta_prime(epoch: int, target: float, anneal_epochs: int) -> float:
    if anneal_epochs <= 1 or epoch >= anneal_epochs - 1:
        return target
    return 2.0 + (target - 2.0) * epoch / (anneal_epochs - 1)


def subgradient(kernel: LossKernel, x: np.ndarray, theta_prime: float, h: float):
    """Gradient of max_z |residual| taken at the arg-max (ties -> largest z)."""
    res = kernel.residual(x, theta_prime)
    absres = np.abs(res)
    i = res.size - 1 - int(np.argmax(absres[::-1]))
    sign = math.copysign(1.0, res[i])
    grad = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        up = kernel.cdf_at(i, x + e, theta_prime)
        dn = kernel.cdf_at(i, x - e, theta_prime)
        grad[j] = sign * (up - dn) / (2 * h)
    return float(absres[i]), grad


def fit(theta: float, config: FitConfig | None = None, seed: int = 0) -> FitResult:
    """Fit the density parameters by Adam on their logarithms.

    One epoch is ``steps_per_epoch`` full-batch steps.  Over the first
    ``anneal_epochs`` epochs the tail exponent theta' rises linearly from 2
    to its true value; at that point the optimizer and scheduler restart.
    """
    config = config or FitConfig()
    target_tp = theta_conjugate(theta)
    kernel = LossKernel(theta, config.grid)
    x = np.log(np.asarray(config.init, dtype=float))
    if config.init_jitter > 0:
        x = x + config.init_jitter * make_rng(seed, 0).standard_normal(4)

    def fresh():
        opt = Adam(4, config.lr, config.betas, config.eps)
        sched = PlateauScheduler(opt, config.lr_factor, config.patience, config.plateau_threshold, config.cooldown)
        return opt, sched

    opt, sched = fresh()
    trace = []
    for epoch in range(config.epochs):
        if epoch == config.anneal_epochs:
            opt, sched = fresh()
        tp = _annealed_theta_prime(epoch, target_tp, config.anneal_epochs)
        for _ in range(config.steps_per_epoch):
            with np.errstate(all="ignore"):
                cur, grad = subgradient(kernel, x, tp, config.fd_step)
            if not (math.isfinite(cur) and np.all(np.isfinite(grad))):
                raise FitDivergedError(
                    f"non-finite loss at epoch {epoch}",
                    {"theta": theta, "epoch": epoch, "log_params": x.tolist(), "theta_prime": tp},
                )
            x = opt.step(x, grad)
        with np.errstate(all="ignore"):
            loss = kernel.loss(x, tp)
        if not math.isfinite(loss):
            raise FitDivergedError(
                f"non-finite loss at end of epoch {epoch}",
                {"theta": theta, "epoch": epoch, "log_params": x.tolist(), "theta_prime": tp},
            )
        sched.step(loss)
        trace.append({"epoch": epoch, "loss": loss, "lr": opt.lr, "theta_prime": tp})
        log.debug("theta=%g epoch=%d loss=%.3e lr=%.2e", theta, epoch, loss, opt.lr)
    model = DensityModel.from_log(theta, x)
    final = kernel.loss(x, model.theta_prime)
    return FitResult(model, final, trace, seed, config)


# -- activation table -------------------------------------------------------------


def default_z_grid(z_max: float = 8.0) -> np.ndarray:
    """Symmetric grid: step 0.005 on |z| <= 2, 0.01 up to 5, 0.02 beyond."""
    pos = np.concatenate(
        [
            np.arange(0.0, 2.0, 0.005),
            np.arange(2.0, 5.0, 0.01),
            np.arange(5.0, z_max + 1e-9, 0.02),
        ]
    )
    pos = np.unique(np.round(pos, 12))
    return np.concatenate([-pos[:0:-1], pos])


def abs_logsf(model: DensityModel, y):
    """log P(|Y| > y) for |Y| with density g / (total mass of g)."""
    return model._log_tail_mass(y) - math.log(model.mass())


def limit_activation_theta2(z):
    """Exact limit of phi_theta as theta -> 2+: -sqrt(2) cos(pi Phi(z)).

    At theta = 2 the matching |Y| law is that of sqrt(2) |cos U| with U
    uniform, whose CDF is explicit.
    """
    return -math.sqrt(2.0) * np.cos(math.pi * std_normal_cdf(z))


class ActivationTable(Activation):
    """Strictly increasing odd activation stored on a grid.

    Inside the grid it is a monotone cubic (PCHIP) interpolant.  Beyond
    |z| = z_max it follows phi(z) = scale * (z^2/2)^(1/theta'), the inverse
    of matching the Weibull-type tail of |Y| to the Gaussian one; ``scale``
    is set so the tail joins the last grid value continuously.

    The fitted activations can carry narrow features (near theta = 2 the
    slope spikes over a width of about 0.02), so correlation maps use a
    finer polar rule than the default.
    """

    rule_2d = polar_rule(2881, -14.0, 2.5, 64)

    def __init__(self, theta: float, grid, values, fit_loss: float = math.nan, meta: dict | None = None):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 3:
            raise ValueError("grid and values must be matching 1-D arrays")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(np.diff(values) <= 0):
            raise ValueError("activation values must be strictly increasing")
        self.theta = float(theta)
        self.theta_prime = theta_conjugate(theta)
        self.grid = grid
        self.values = values
        self.fit_loss = float(fit_loss)
        self.meta = dict(meta or {})
        self.name = f"phi_theta(theta={self.theta:g})"
        self._interp = PchipInterpolator(grid, values, extrapolate=False)
        self._slope = self._interp.derivative()
        self.z_hi, self.z_lo = grid[-1], grid[0]
        self.tail_scale_pos = values[-1] / (0.5 * self.z_hi**2) ** (1 / self.theta_prime)
        self.tail_scale_neg = -values[0] / (0.5 * self.z_lo**2) ** (1 / self.theta_prime)

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        p = 1.0 / self.theta_prime
        out = self._interp(np.clip(x, self.z_lo, self.z_hi))
        with np.errstate(divide="ignore", invalid="ignore"):
            hi = self.tail_scale_pos * (0.5 * x * x) ** p
            lo = -self.tail_scale_neg * (0.5 * x * x) ** p
        out = np.where(x > self.z_hi, hi, np.where(x < self.z_lo, lo, out))
        return out if out.ndim else float(out)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        p = 1.0 / self.theta_prime
        out = self._slope(np.clip(x, self.z_lo, self.z_hi))
        with np.errstate(divide="ignore", invalid="ignore"):
            base = 2.0 * p * (0.5 * x * x) ** p / np.abs(x)
        out = np.where(x > self.z_hi, self.tail_scale_pos * base, np.where(x < self.z_lo, self.tail_scale_neg * base, out))
        return out if out.ndim else float(out)

    # -- persistence
    def save(self, path, seed: int | None = None) -> Path:
        path = Path(path)
        lines = [f"# {TABLE_TAG} theta={self.theta:.12g} fit_loss={self.fit_loss:.6e} version={TABLE_VERSION}"]
        lines.append(f"# gausspre version={TABLE_VERSION} seed={'' if seed is None else seed}")
        if self.meta:
            lines.append("# meta " + " ".join(f"{k}={v}" for k, v in self.meta.items()))
        lines.append("z,phi")
        lines += [f"{z:.6f},{v:.17g}" for z, v in zip(self.grid, self.values)]
        path.write_text("\n".join(lines) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "ActivationTable":
        return cls.from_text(Path(path).read_text(), source=str(path))

    @classmethod
    def from_text(cls, text: str, source: str = "<table>") -> "ActivationTable":
        header, meta, rows = None, {}, []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                fields = line[1:].split()
                if fields and fields[0] == TABLE_TAG:
                    header = dict(f.split("=", 1) for f in fields[1:])
                elif fields and fields[0] == "meta":
                    meta = dict(f.split("=", 1) for f in fields[1:])
                continue
            if line.lower().startswith("z,"):
                continue
            z, v = line.split(",")
            rows.append((float(z), float(v)))
        if header is None or "theta" not in header:
            raise ValueError(f"{source}: missing '# {TABLE_TAG} theta=...' header")
        if int(header.get("version", TABLE_VERSION)) != TABLE_VERSION:
            raise ValueError(f"{source}: unsupported table version {header['version']}")
        arr = np.array(rows)
        if arr.ndim != 2 or arr.shape[0] < 3:
            raise ValueError(f"{source}: too few rows")
        if np.any(np.diff(arr[:, 1]) <= 0):
            raise ValueError(f"{source}: activation values are not strictly increasing")
        return cls(float(header["theta"]), arr[:, 0], arr[:, 1], float(header.get("fit_loss", "nan")), meta)


def build_activation(
    theta: float,
    model: DensityModel,
    fit_loss: float = math.nan,
    z_grid=None,
    y_points: int = 40001,
) -> ActivationTable:
    """Tabulate phi(z) = F_|Y|^{-1}(F_|G|(z)) for z >= 0 and mirror it.

    The composition is done in log-survival space, where both tails keep
    full relative precision: -log P(|Y| > y) is tabulated from the closed
    form of the tail masses of g and inverted by monotone interpolation.
    """
    if model.theta != theta:
        raise ValueError("model was fitted for a different theta")
    model = replace(model, theta_prime_override=None)
    z_grid = default_z_grid() if z_grid is None else np.asarray(z_grid, dtype=float)
    z_pos = z_grid[z_grid >= 0]
    target = -half_normal_logsf(z_pos)

    y_max = 4.0 * model.lambda2
    while -abs_logsf(model, y_max) < target.max() + 2.0:
        y_max *= 1.5
        if y_max > 1e6:
            raise ValueError("|Y| tail does not reach the requested z range")
    y = np.linspace(0.0, y_max, y_points)
    u = -abs_logsf(model, y)
    finite = np.isfinite(u)
    y, u = y[finite], u[finite]
    if np.any(np.diff(u) <= 0):
        # flat stretches beyond double precision; keep the strictly rising part
        keep = np.concatenate([[True], np.diff(u) > 0])
        if not np.all(np.maximum.accumulate(u) == u):
            raise ValueError("tabulated CDF of |Y| is not monotone")
        y, u = y[keep], u[keep]
    inverse = PchipInterpolator(u, y)
    phi_pos = inverse(target)
    phi_pos[0] = 0.0
    grid = np.concatenate([-z_pos[:0:-1], z_pos])
    values = np.concatenate([-phi_pos[:0:-1], phi_pos])
    meta = {
        "alpha": f"{model.alpha:.17g}",
        "gamma": f"{model.gamma:.17g}",
        "lambda1": f"{model.lambda1:.17g}",
        "lambda2": f"{model.lambda2:.17g}",
        "loss_t_trunc": "12",
        "table_mass": "full_half_line",
    }
    return ActivationTable(theta, grid, values, fit_loss, meta)


def shipped_table_name(theta: float) -> str:
    return f"phi_theta_{theta:g}.csv"


def load_shipped(theta: float) -> ActivationTable:
    """Pre-fitted table shipped with the package."""
    match = [t for t in SHIPPED_THETAS if abs(t - theta) < 1e-12]
    if not match:
        raise ValueError(f"no shipped table for theta={theta}; shipped: {SHIPPED_THETAS}")
    ref = resources.files("gausspre").joinpath("data", shipped_table_name(match[0]))
    return ActivationTable.from_text(ref.read_text(), source=shipped_table_name(match[0]))
