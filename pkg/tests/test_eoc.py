import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from gausspre import eoc
from gausspre.activation_fit import load_shipped
from gausspre.eoc import (
    EocSetting,
    NoFixedPointError,
    PhiDeltaOmega,
    chi1,
    correlation_map,
    correlation_map_star,
    eoc_curve,
    eoc_point,
    find_fixed_points,
    iterate_variance,
    phase_classify,
    phi_delta_omega,
    select_v_star,
    sigma_omega,
    variance_map,
)

SB_TANH = math.sqrt(0.013)


def quad_gauss(f, v):
    g = lambda z: f(math.sqrt(v) * z) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    return integrate.quad(g, -np.inf, np.inf, limit=400, epsabs=1e-13)[0]


def analytic_chi1(sigma_w, deriv, v_star):
    """Oracle: sigma_w^2 E[phi'(sqrt(v*) Z)^2] by adaptive quadrature."""
    return sigma_w**2 * quad_gauss(lambda z: deriv(z) ** 2, v_star)


def tanh_deriv(z):
    return 1.0 - math.tanh(z) ** 2


class TestVarianceMap:
    def test_relu_identity(self):
        s = EocSetting(math.sqrt(2), 0.0, eoc.relu)
        assert variance_map(3.0, s) == pytest.approx(3.0, rel=1e-12)

    def test_identity_linear(self):
        s = EocSetting(1.0, 0.0, eoc.identity)
        assert variance_map(0.7, s) == pytest.approx(0.7, rel=1e-12)

    def test_tanh_against_quad(self):
        s = EocSetting(math.sqrt(1.46), SB_TANH, eoc.tanh)
        oracle = 1.46 * quad_gauss(lambda z: math.tanh(z) ** 2, 0.8) + 0.013
        assert variance_map(0.8, s) == pytest.approx(oracle, abs=1e-10)

    def test_tanh_iteration_converges(self):
        v, converged, _ = iterate_variance(EocSetting(math.sqrt(1.46), SB_TANH, eoc.tanh))
        assert converged
        assert 0 < v < 1
        oracle = optimize.brentq(lambda u: 1.46 * quad_gauss(lambda z: math.tanh(z) ** 2, u) + 0.013 - u, 0.1, 1.0, xtol=1e-14)
        assert v == pytest.approx(oracle, abs=1e-8)

    @pytest.mark.parametrize(
        "act", [eoc.tanh, eoc.identity, PhiDeltaOmega(0.99, 6.0), PhiDeltaOmega(0.5, 2.0)], ids=lambda a: a.name
    )
    def test_strictly_increasing(self, act):
        s = EocSetting(1.1, 0.1, act)
        vals = np.array([variance_map(v, s) for v in np.geomspace(1e-3, 50, 120)])
        assert np.all(np.diff(vals) > 0)

    def test_negative_variance(self):
        with pytest.raises(ValueError):
            variance_map(-1.0, EocSetting(1.0, 0.0, eoc.tanh))

    def test_setting_validation(self):
        with pytest.raises(ValueError):
            EocSetting(0.0, 0.0, eoc.tanh)
        with pytest.raises(ValueError):
            EocSetting(1.0, -0.1, eoc.tanh)


class TestCorrelationMap:
    def test_unit_correlation_fixed(self):
        s = EocSetting(math.sqrt(1.46), SB_TANH, eoc.tanh)
        assert correlation_map_star(1.0, s) == pytest.approx(1.0, abs=1e-12)

    def test_odd_activation_zero_correlation(self):
        s = EocSetting(1.3, 0.0, eoc.tanh)
        assert correlation_map(0.0, 0.9, 0.9, s) == pytest.approx(0.0, abs=1e-14)

    @given(st.floats(min_value=-1, max_value=1), st.floats(min_value=0.1, max_value=5))
    @settings(max_examples=30)
    def test_identity_preserves(self, c, v):
        s = EocSetting(1.0, 0.0, eoc.identity)
        assert correlation_map(c, v, 2 * v, s) == pytest.approx(c, abs=1e-12)

    @given(st.floats(min_value=-1, max_value=1))
    @settings(max_examples=30, deadline=None)
    def test_maps_into_unit_interval(self, c):
        for act in (eoc.tanh, eoc.relu):
            s = EocSetting(1.4, 0.2, act)
            out = correlation_map(c, 0.7, 0.7, s)
            assert -1.0 - 1e-12 <= out <= 1.0 + 1e-12

    def test_relu_arc_cosine_oracle(self):
        # closed form for ReLU: E[relu(X) relu(Y)] = (sqrt(1-c^2) + (pi - acos c) c) / (2 pi)
        c = 0.3
        s = EocSetting(math.sqrt(2), 0.0, eoc.relu)
        oracle = (math.sqrt(1 - c * c) + (math.pi - math.acos(c)) * c) / math.pi
        assert correlation_map(c, 1.0, 1.0, s) == pytest.approx(oracle, abs=1e-4)


class TestChi1:
    def test_identity(self):
        assert chi1(EocSetting(1.0, 0.0, eoc.identity), 1.0) == pytest.approx(1.0, abs=1e-8)

    def test_relu_edge(self):
        assert chi1(EocSetting(math.sqrt(2), 0.0, eoc.relu), 1.0) == pytest.approx(1.0, abs=1e-6)

    def test_tanh_edge_pair(self):
        s = EocSetting(math.sqrt(1.46), SB_TANH, eoc.tanh)
        assert chi1(s) == pytest.approx(1.0, abs=0.02)

    @pytest.mark.parametrize("sw2", [0.5, 1.46, 4.0])
    def test_tanh_against_analytic(self, sw2):
        s = EocSetting(math.sqrt(sw2), SB_TANH, eoc.tanh)
        v = select_v_star(s)
        assert chi1(s, v) == pytest.approx(analytic_chi1(math.sqrt(sw2), tanh_deriv, v), rel=1e-5)

    @pytest.mark.parametrize("theta,rel", [(2.05, 3e-3), (3.0, 1e-4), (10.0, 1e-4)])
    def test_table_against_analytic(self, theta, rel):
        # the theta = 2.05 slope has a spike of width ~0.02, hence the looser match
        table = load_shipped(theta)
        s = EocSetting(1.0, 0.1, table)
        v = select_v_star(s)
        g = lambda z: float(table.deriv(math.sqrt(v) * z)) ** 2 * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        cuts = [0.0, 1e-3, 0.1, 0.4, 0.7, 1.0, 3.0, 8.0, 40.0]
        oracle = 2 * sum(integrate.quad(g, a, b, limit=400, epsabs=1e-14)[0] for a, b in zip(cuts, cuts[1:]))
        assert chi1(s, v) == pytest.approx(oracle, rel=rel)

    def test_chaotic_side(self):
        assert chi1(EocSetting(2.0, SB_TANH, eoc.tanh)) > 1.0


class TestPhase:
    def test_ordered(self):
        assert phase_classify(EocSetting(math.sqrt(0.5), SB_TANH, eoc.tanh)) == "ordered"

    def test_chaotic(self):
        assert phase_classify(EocSetting(2.0, SB_TANH, eoc.tanh)) == "chaotic"

    def test_relu_edge(self):
        assert phase_classify(EocSetting(math.sqrt(2), 0.0, eoc.relu)) == "edge"


class TestPhiDeltaOmega:
    def test_origin(self):
        assert phi_delta_omega(0.99, 6.0, 0.0) == 0.0

    def test_unit(self):
        assert phi_delta_omega(0.7, 3.0, 1.0) == 1.0

    @given(st.floats(min_value=-1e6, max_value=1e6), st.floats(min_value=0, max_value=1), st.floats(min_value=0.1, max_value=20))
    def test_odd(self, x, delta, omega):
        assert phi_delta_omega(delta, omega, -x) == -phi_delta_omega(delta, omega, x)

    @pytest.mark.parametrize("delta,omega", [(0.99, 6.0), (1.0, 2.0), (0.3, 10.0)])
    def test_strictly_increasing(self, delta, omega):
        x = np.geomspace(1e-6, 1e4, 20001)
        assert np.all(np.diff(phi_delta_omega(delta, omega, x)) > 0)

    def test_parameter_checks(self):
        with pytest.raises(ValueError):
            PhiDeltaOmega(1.5, 2.0)
        with pytest.raises(ValueError):
            PhiDeltaOmega(0.5, 0.0)

    @pytest.mark.parametrize("omega,expected", [(2.0, 0.879), (3.0, 0.945), (6.0, 0.987)])
    def test_sigma_omega(self, omega, expected):
        assert sigma_omega(0.99, omega) == pytest.approx(expected, abs=1.5e-3)

    def test_sigma_omega_against_quad(self):
        # oracle: the two envelope integrals by adaptive quad in s = ln z
        delta, omega = 0.99, 3.0

        def envelope(sign):
            f = lambda s: math.exp(3 * s - 0.5 * math.exp(2 * s) + sign * 2 * delta / omega * math.sin(omega * s))
            return 2 * integrate.quad(f, -40, 4, limit=800, epsabs=1e-14)[0] / math.sqrt(2 * math.pi)

        oracle = math.sqrt(2 / (envelope(-1) + envelope(1)))
        assert sigma_omega(delta, omega) == pytest.approx(oracle, rel=1e-9)

    @pytest.mark.parametrize("omega", [2.0, 6.0])
    def test_log_log_periodicity(self, omega):
        s = EocSetting(sigma_omega(0.99, omega), 0.0, PhiDeltaOmega(0.99, omega))
        reduced = lambda r: math.log(variance_map(math.exp(r), s) / math.exp(r))
        period = 4 * math.pi / omega
        for r in np.linspace(-3, 3, 13):
            assert reduced(r + period) == pytest.approx(reduced(r), abs=1e-6)

    def test_fixed_points_omega6(self):
        s = EocSetting(sigma_omega(0.99, 6.0), 0.0, PhiDeltaOmega(0.99, 6.0))
        report = find_fixed_points(s, 0.1, 20.0)
        stable = [p.v for p in report.stable]
        unstable = [p.v for p in report.unstable]
        assert any(abs(v - 0.8) < 0.05 for v in stable)
        assert any(abs(v - 6.5) < 0.2 for v in stable)
        assert any(abs(v - 2.3) < 0.1 for v in unstable)
        for p in report.points:
            assert abs(variance_map(p.v, s) - p.v) < 1e-8 * p.v

    def test_many_stable_points(self):
        s = EocSetting(sigma_omega(0.99, 6.0), 0.0, PhiDeltaOmega(0.99, 6.0))
        assert len(find_fixed_points(s, 1e-2, 1e2).stable) >= 3

    def test_alternating_stability(self):
        s = EocSetting(sigma_omega(0.99, 6.0), 0.0, PhiDeltaOmega(0.99, 6.0))
        flags = [p.stable for p in find_fixed_points(s, 1e-2, 1e2).points]
        assert all(a != b for a, b in zip(flags, flags[1:]))

    def test_v_star_selection(self):
        s = EocSetting(sigma_omega(0.99, 6.0), 0.0, PhiDeltaOmega(0.99, 6.0))
        assert select_v_star(s) == pytest.approx(0.804, abs=0.01)
        assert select_v_star(s, override=6.5) == 6.5


class TestFixedPoints:
    def test_tanh_single_point(self):
        report = find_fixed_points(EocSetting(math.sqrt(1.46), SB_TANH, eoc.tanh), 1e-3, 10.0)
        assert len(report.points) == 1
        assert report.points[0].stable

    def test_identity_degenerate(self):
        report = find_fixed_points(EocSetting(1.0, 0.0, eoc.identity))
        assert report.degenerate
        assert len(report.points) > 0

    def test_bad_range(self):
        with pytest.raises(ValueError):
            find_fixed_points(EocSetting(1.0, 0.0, eoc.tanh), 1.0, 0.5)

    def test_collapse_error(self):
        with pytest.raises(NoFixedPointError) as info:
            select_v_star(EocSetting(0.5, 0.0, eoc.tanh))
        assert info.value.direction == "collapse"

    def test_explode_error(self):
        with pytest.raises(NoFixedPointError) as info:
            select_v_star(EocSetting(2.0, 0.1, eoc.relu))
        assert info.value.direction == "explode"


class TestEocCurve:
    def test_tanh_point(self):
        p = eoc_point(eoc.tanh, SB_TANH)
        assert p.sigma_w**2 == pytest.approx(1.46, abs=0.03)

    def test_identity_point(self):
        assert eoc_point(eoc.identity, 0.0).sigma_w == pytest.approx(1.0, abs=1e-6)

    def test_relu_single_point(self):
        points, warnings = eoc_curve(eoc.relu, [0.0, 0.1, 0.3])
        assert [(p.sigma_b, round(p.sigma_w, 6)) for p in points] == [(0.0, round(math.sqrt(2), 6))]
        assert len(warnings) == 2

    def test_recheck_chi1(self):
        points, _ = eoc_curve(eoc.tanh, [0.05, 0.1, 0.2, 0.4])
        assert len(points) == 4
        for p in points:
            assert abs(chi1(EocSetting(p.sigma_w, p.sigma_b, eoc.tanh)) - 1) <= 2e-3
            assert abs(chi1(EocSetting(p.sigma_w, p.sigma_b, eoc.tanh), p.v_star) - 1) <= 2e-3

    def test_tanh_curve_increasing(self):
        points, _ = eoc_curve(eoc.tanh, [0.05, 0.2, 0.4])
        sw = [p.sigma_w for p in points]
        assert sw == sorted(sw)

    def test_no_sign_change(self):
        points, warnings = eoc_curve(eoc.tanh, [0.1], bracket=(0.05, 0.5))
        assert points == []
        assert "sign" in warnings[0]["reason"]
