"""Acceptance checks; the terminal summary prints one PASS/FAIL line per criterion."""

import math

import numpy as np
import pytest
from scipy import integrate

from gausspre import cli, eoc
from gausspre.activation_fit import SHIPPED_THETAS, load_shipped
from gausspre.distributions import make_rng, weibull_cdf, weibull_pdf, weibull_quantile
from gausspre.eoc import EocSetting, PhiDeltaOmega, chi1, eoc_curve, find_fixed_points, sigma_omega
from gausspre.kstest import ks_test
from gausspre.mellin import laguerre_coefficients, laguerre_inverse_eval
from gausspre.propagation import (
    Init,
    NetworkConfig,
    independence_samples,
    layer_distribution_experiment,
    product_test,
    sample_layers,
    synthetic_input,
)
from gausspre.quadrature import hermite_rule

crit = pytest.mark.criterion


@crit(1)
@pytest.mark.parametrize("omega,expected", [(2.0, 0.879), (3.0, 0.945), (6.0, 0.987)])
def test_sigma_omega_calibration(omega, expected):
    assert sigma_omega(0.99, omega) == pytest.approx(expected, abs=0.002)


@crit(2)
def test_oscillating_fixed_points():
    setting = EocSetting(sigma_omega(0.99, 6.0), 0.0, PhiDeltaOmega(0.99, 6.0))
    report = find_fixed_points(setting, 0.1, 20.0)
    stable = [p.v for p in report.stable]
    unstable = [p.v for p in report.unstable]
    assert any(abs(v - 0.8) <= 0.08 for v in stable), stable
    assert any(abs(v - 6.5) <= 0.65 for v in stable), stable
    assert any(abs(v - 2.3) <= 0.345 for v in unstable), unstable


@crit(3)
def test_tanh_edge_of_chaos():
    points, warnings = eoc_curve(eoc.tanh, [math.sqrt(0.013)])
    assert not warnings
    assert points[0].sigma_w ** 2 == pytest.approx(1.46, abs=0.03)


@crit(3)
def test_relu_chi1_at_edge():
    assert chi1(EocSetting(math.sqrt(2.0), 0.0, eoc.relu)) == pytest.approx(1.0, abs=1e-3)


UNIT_GAUSSIAN = Init.gaussian(1.0, 0.0)


@crit(4)
@pytest.mark.parametrize("act,expected", [(eoc.tanh, 0.628), (eoc.relu, 0.707)], ids=["tanh", "relu"])
def test_product_std_elementary(act, expected):
    assert product_test(1, act, UNIT_GAUSSIAN, 10**6, seed=0).std == pytest.approx(expected, abs=0.005)


@crit(4)
@pytest.mark.parametrize("theta", SHIPPED_THETAS)
def test_product_std_phi_theta(theta):
    std = product_test(1, load_shipped(theta), Init.weibull(theta), 10**6, seed=0).std
    assert 0.97 <= std <= 1.01


@crit(5)
@pytest.mark.parametrize("theta", SHIPPED_THETAS)
def test_single_product_gaussian(theta):
    res = product_test(1, load_shipped(theta), Init.weibull(theta), 10**6, seed=1)
    assert res.standardized.statistic <= 5e-3


@crit(5)
@pytest.mark.parametrize("n", [30, 100])
@pytest.mark.parametrize("theta", SHIPPED_THETAS)
def test_many_inputs_pass_ks(theta, n):
    res = product_test(n, load_shipped(theta), Init.weibull(theta), 18000, seed=2)
    assert res.standardized.threshold == pytest.approx(0.0101, abs=1e-4)
    assert not res.standardized.reject, res.standardized.statistic


PROPAGATION_X = synthetic_input(100, 0)


@crit(6)
@pytest.mark.parametrize("theta", [2.05, 2.5, 3.0])
def test_phi_theta_stays_gaussian(theta):
    config = NetworkConfig.uniform(100, 50, load_shipped(theta), Init.weibull(theta))
    report = layer_distribution_experiment(config, PROPAGATION_X, 10**4, seed=0)
    assert report.threshold == pytest.approx(0.0136, abs=1e-4)
    worst = max(report.layers, key=lambda s: s.ks_standardized)
    assert worst.ks_standardized < report.threshold, worst


@crit(6)
def test_relu_edge_leaves_gaussian():
    config = NetworkConfig.uniform(100, 50, eoc.relu, Init.gaussian(math.sqrt(2.0), 0.0))
    report = layer_distribution_experiment(config, PROPAGATION_X, 10**4, seed=0)
    assert report.layers[-1].ks_standardized > report.threshold


@crit(7)
def test_mellin_inversion_fails():
    series = laguerre_coefficients(2.05, 500, "float64")
    assert series.divergence_index is not None
    assert laguerre_inverse_eval(series, np.linspace(0, 5, 1001)).min() < 0


@crit(8)
def test_rademacher_identity_atom():
    z = independence_samples(1, 2, eoc.identity, Init.rademacher(), 10**5, seed=0)
    assert np.mean(z == 0.0) == pytest.approx(0.5, abs=0.01)


@crit(9)
@pytest.mark.parametrize("theta", [2.05, 3.0, 10.0])
def test_quantile_cdf_round_trip(theta):
    t = np.linspace(-5, 5, 1001)
    p = np.linspace(1e-9, 1 - 1e-9, 1001)
    np.testing.assert_allclose(weibull_cdf(theta, weibull_quantile(theta, p)), p, rtol=0, atol=1e-12)
    np.testing.assert_allclose(weibull_quantile(theta, weibull_cdf(theta, t)), t, rtol=0, atol=1e-12)


@crit(9)
@pytest.mark.parametrize("order", [16, 64, 128])
def test_hermite_moments(order):
    # exact for degree < 2 * order: E z^(2k) = (2k - 1)!!, odd moments vanish
    rule = hermite_rule(order)
    for k in range(min(order, 12)):
        double_factorial = float(np.prod(np.arange(2 * k - 1, 0, -2)))
        assert (rule.weights * rule.nodes ** (2 * k)).sum() == pytest.approx(double_factorial, rel=1e-10)
        odd = (rule.weights * np.abs(rule.nodes) ** (2 * k + 1)).sum()
        assert abs((rule.weights * rule.nodes ** (2 * k + 1)).sum()) <= 1e-13 * odd


@crit(9)
@pytest.mark.parametrize("theta", [2.05, 2.5, 3.0, 5.0, 10.0])
def test_inverse_moment(theta):
    f = lambda t: 2 * weibull_pdf(theta, t) / t
    val = integrate.quad(f, 0, 1, limit=200)[0] + integrate.quad(f, 1, np.inf, limit=200)[0]
    assert val == pytest.approx(math.gamma(1 - 1 / theta), abs=1e-6)


@crit(9)
@pytest.mark.parametrize("theta", SHIPPED_THETAS)
def test_tables_monotone_and_odd(theta):
    table = load_shipped(theta)
    assert np.all(np.diff(table.values) > 0)
    x = make_rng(3, 0).uniform(-12, 12, 10**4)
    np.testing.assert_allclose(table(-x), -table(x), rtol=0, atol=1e-8)
    y = np.sort(x)
    assert np.all(np.diff(table(y))[np.diff(y) > 0] > 0)


@crit(9)
def test_ks_null_rejection_rate():
    rejections = sum(ks_test(make_rng(seed, 7).standard_normal(2000)).reject for seed in range(200))
    assert 0.01 <= rejections / 200 <= 0.12


@crit(9)
def test_full_run_determinism(tmp_path):
    argv = ["propagate", "--preset", "weibull-2.05", "--width", "30", "--depth", "5", "--samples", "500"]
    for name, threads in (("a", 1), ("b", 4)):
        assert cli.main(argv + ["--threads", str(threads), "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "propagation.csv").read_bytes() == (tmp_path / "b" / "propagation.csv").read_bytes()
    config = NetworkConfig.uniform(30, 5, eoc.tanh, Init.gaussian(1.2, 0.1))
    x = synthetic_input(30, 3)
    np.testing.assert_array_equal(sample_layers(config, x, 400, 9), sample_layers(config, x, 400, 9, threads=3))


@crit(10)
def test_theta10_near_identity():
    z = np.linspace(-2, 2, 401)
    assert np.abs(load_shipped(10.0)(z) - z).max() <= 0.15


@crit(10)
def test_theta205_bounded():
    assert np.abs(load_shipped(2.05).values).max() <= 1.1


@crit(10)
def test_theta205_central_slope():
    assert load_shipped(2.05).deriv(0.0) == pytest.approx(math.sqrt(math.pi), abs=0.1)
