"""Gaussian-measure integration.

Every rule here integrates against Dz = exp(-z^2/2) / sqrt(2 pi) dz, so an
expectation E[f(sqrt(v) Z)] is simply ``sum(weights * f(sqrt(v) * nodes))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

DEFAULT_ORDER_1D = 128
DEFAULT_ORDER_2D = 64


@dataclass(frozen=True)
class HermiteRule:
    """Nodes and weights for the standard normal measure."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def expect(self, values) -> float:
        return float(np.dot(self.weights, values))


@lru_cache(maxsize=None)
def hermite_rule(order: int = DEFAULT_ORDER_1D) -> HermiteRule:
    if order < 1:
        raise ValueError("rule order must be >= 1")
    nodes, weights = hermegauss(order)
    weights = weights / math.sqrt(2.0 * math.pi)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return HermiteRule(order, nodes, weights)


@lru_cache(maxsize=None)
def log_rule(order: int = 4001, lo: float = -40.0, hi: float = 4.0) -> HermiteRule:
    """Symmetric rule with nodes +-exp(s) on a uniform s-grid.

    Trapezoid in log|z| is exponentially accurate for integrands that are
    smooth in log|z|, which is what activations oscillating in ln|x| need
    (Hermite nodes do not resolve those oscillations near zero).
    """
    s = np.linspace(lo, hi, order)
    ds = s[1] - s[0]
    z = np.exp(s)
    w = z * np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi) * ds
    w[[0, -1]] *= 0.5
    nodes = np.concatenate([-z[::-1], z])
    weights = np.concatenate([w[::-1], w])
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return HermiteRule(2 * order, nodes, weights)


@dataclass(frozen=True)
class PolarRule:
    """Rule for a correlated Gaussian pair written in polar form.

    With c = cos(a), the pair (Z1, Z2') equals (R cos b, R cos(b - a)) for
    R Rayleigh and b uniform.  The radius uses a trapezoid in ln r; the
    angle is split where either coordinate vanishes and each arc gets a
    Gauss-Legendre rule, so activations that are only non-smooth at the
    origin (ReLU kink, power-type terms) are integrated to high order.
    """

    radial_nodes: np.ndarray
    radial_weights: np.ndarray
    angle_order: int


@lru_cache(maxsize=None)
def polar_rule(radial_points: int = 361, lo: float = -14.0, hi: float = 2.5, angle_order: int = 32) -> PolarRule:
    """Radial weights integrate r exp(-r^2/2) dr over r = exp(s)."""
    if radial_points < 2 or angle_order < 1:
        raise ValueError("rule sizes must be positive")
    s = np.linspace(lo, hi, radial_points)
    r = np.exp(s)
    w = r * r * np.exp(-0.5 * r * r) * (s[1] - s[0])
    w[[0, -1]] *= 0.5
    r.setflags(write=False)
    w.setflags(write=False)
    return PolarRule(r, w, int(angle_order))


def _angle_nodes(alpha: float, order: int):
    """Gauss-Legendre nodes on the arcs of [0, 2 pi) between the zeros of
    cos(b) and cos(b - alpha); weights sum to 1 (uniform angle)."""
    cuts = np.sort(np.mod([0.5 * math.pi, 1.5 * math.pi, alpha + 0.5 * math.pi, alpha + 1.5 * math.pi], 2 * math.pi))
    edges = np.concatenate([cuts, [cuts[0] + 2 * math.pi]])
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a <= 1e-15:
            continue
        nodes.append(0.5 * (a + b) + 0.5 * (b - a) * x)
        weights.append(0.5 * (b - a) * w / (2 * math.pi))
    return np.concatenate(nodes), np.concatenate(weights)


def _expect_2d_polar(f, va: float, vb: float, c: float, rule: PolarRule) -> float:
    alpha = math.acos(min(1.0, max(-1.0, c)))
    beta, wb = _angle_nodes(alpha, rule.angle_order)
    r = rule.radial_nodes[:, None]
    x = math.sqrt(va) * r * np.cos(beta)[None, :]
    y = math.sqrt(vb) * r * np.cos(beta - alpha)[None, :]
    values = np.asarray(f(x, y), dtype=float)
    values = np.broadcast_to(values, x.shape)
    if not np.all(np.isfinite(values)):
        raise ValueError("integrand is not finite at a quadrature node")
    return float(rule.radial_weights @ values @ wb)


def gauss_expect_1d(f, v: float, rule: HermiteRule | None = None) -> float:
    """E[f(sqrt(v) Z)] for Z ~ N(0, 1)."""
    if v < 0:
        raise ValueError("variance must be non-negative")
    rule = rule or hermite_rule(DEFAULT_ORDER_1D)
    values = np.asarray(f(math.sqrt(v) * rule.nodes), dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("integrand is not finite at a quadrature node")
    return rule.expect(values)


def gauss_expect_2d(f, va: float, vb: float, c: float, rule: HermiteRule | PolarRule | None = None) -> float:
    """E[f(sqrt(va) Z1, sqrt(vb) Z2')] with Z2' = c Z1 + sqrt(1 - c^2) Z2.

    A HermiteRule is used as a tensor-product rule over the independent
    pair (Z1, Z2); a PolarRule integrates in polar form.
    """
    if va < 0 or vb < 0:
        raise ValueError("variances must be non-negative")
    if not -1.0 <= c <= 1.0:
        raise ValueError(f"correlation must lie in [-1, 1], got {c}")
    if isinstance(rule, PolarRule):
        return _expect_2d_polar(f, va, vb, c, rule)
    rule = rule or hermite_rule(DEFAULT_ORDER_2D)
    z1 = rule.nodes[:, None]
    z2 = rule.nodes[None, :]
    z2p = c * z1 + math.sqrt(max(0.0, 1.0 - c * c)) * z2
    values = np.asarray(f(math.sqrt(va) * z1, math.sqrt(vb) * z2p), dtype=float)
    values = np.broadcast_to(values, (rule.order, rule.order))
    if not np.all(np.isfinite(values)):
        raise ValueError("integrand is not finite at a quadrature node")
    return float(rule.weights @ values @ rule.weights)


def cdf_from_density(grid, density) -> np.ndarray:
    """Cumulative trapezoid integral of a tabulated non-negative density.

    The result starts at 0 and is forced non-decreasing; it is not rescaled,
    so its last entry is the total mass on the grid.
    """
    x = np.asarray(grid, dtype=float)
    f = np.asarray(density, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("need a 1-D grid with at least two points")
    if f.shape != x.shape:
        raise ValueError("grid and density must have the same shape")
    if np.any(np.diff(x) <= 0):
        raise ValueError("grid must be strictly increasing")
    if np.any(f < -1e-9):
        raise ValueError("density has negative entries")
    f = np.clip(f, 0.0, None)
    increments = 0.5 * (f[1:] + f[:-1]) * np.diff(x)
    cdf = np.concatenate([[0.0], np.cumsum(increments)])
    return np.maximum.accumulate(cdf)


@dataclass(frozen=True)
class ProductGrid:
    """Log-spaced t-grid used to evaluate the product CDF integral."""

    t_min: float = 1e-8
    points: int = 3000
    rel_cutoff: float = 1e-14
    t_max: float = 60.0


def product_cdf(theta: float, g, z, grid: ProductGrid | None = None):
    """F(z) = int_0^inf F_|W|(z / t) g(t) dt with F_|W|(u) = 1 - exp(-u^theta).

    The integral is taken in r = ln t (dt = t dr), which tames both the
    t -> 0 end, where z/t blows up, and densities singular at the origin.
    The upper end is cut where g drops below ``rel_cutoff * max(g)``;
    the piece below ``t_min`` is added with g held at its first value.
    """
    grid = grid or ProductGrid()
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(z < 0):
        raise ValueError("product_cdf is defined for z >= 0")
    r = np.linspace(math.log(grid.t_min), math.log(grid.t_max), grid.points)
    t = np.exp(r)
    gv = np.asarray(g(t), dtype=float)
    peak = np.max(gv)
    if peak > 0:
        keep = np.nonzero(gv >= grid.rel_cutoff * peak)[0]
        last = keep[-1] + 1 if keep.size else 1
        r, t, gv = r[: last + 1], t[: last + 1], gv[: last + 1]
    w = np.full(r.size, r[1] - r[0])
    w[[0, -1]] *= 0.5
    with np.errstate(divide="ignore", over="ignore"):
        u = z[:, None] / t[None, :]
        kernel = -np.expm1(-(u**theta))
    out = kernel @ (gv * t * w)
    # mass below t_min, where the kernel is saturated; g taken flat there
    out = out + kernel[:, 0] * gv[0] * t[0]
    return out if out.size > 1 else float(out[0])
