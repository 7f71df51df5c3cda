"""
Tests for the tail approximation, its closed forms and critical values.
"""

import math

import numpy as np
import pytest

from asymptotics import (AngularRule, build_tail_approx, closed_form, constant_gb, critical_value,
                         j_integral, pickands_constant, pickands_info, stationary_tail, tail_approx,
                         tail_approx_hetero)
from config import config
from errors import (ConfigurationError, DivergenceError, DomainError, InadmissibleError,
                    NonMonotoneError)
from model import Interval, RegVarKernel, build_model, mixed_model, parse_model_id, parse_trend_id

OU_U10 = math.sqrt(2.0 / math.pi) * math.sqrt(10.0) * math.exp(-5.0)


class TestConstants:
    def test_gb_single_component(self):
        assert constant_gb([1.0], 1) == pytest.approx(math.sqrt(2.0 / math.pi))

    def test_gb_two_components(self):
        assert constant_gb([1.0, 1.0], 2) == pytest.approx(1.0)

    def test_gb_with_smaller_weights(self):
        expected = math.sqrt(2.0 / math.pi) / math.sqrt(1 - 0.25) / math.sqrt(1 - 0.04)
        assert constant_gb([1.0, 0.5, 0.2], 1) == pytest.approx(expected)

    def test_gb_rejects_inconsistent_k(self):
        with pytest.raises(ConfigurationError):
            constant_gb([1.0, 0.5], 2)
        with pytest.raises(ConfigurationError):
            constant_gb([1.0], 2)

    def test_gb_monotone_in_each_weight(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            k = int(rng.integers(1, 3))
            tail = list(rng.uniform(0.05, 0.9, size=3))
            base = constant_gb([1.0] * k + tail, k)
            for i in range(len(tail)):
                raised = list(tail)
                raised[i] = min(0.99, raised[i] + 0.05)
                assert constant_gb([1.0] * k + raised, k) > base

    def test_exact_pickands_constants(self):
        assert pickands_constant(1.0) == 1.0
        assert pickands_constant(2.0) == pytest.approx(0.5641895835)
        assert pickands_info(1.0)[2] == "exact"

    def test_pickands_table(self, monkeypatch):
        monkeypatch.setattr(config, "pickands_estimates", {1.5: (0.75, 0.7, 0.8)})
        value, ci, source = pickands_info(1.5)
        assert (value, ci, source) == (0.75, (0.7, 0.8), "estimate")
        with pytest.raises(ConfigurationError):
            pickands_info(0.6)
        with pytest.raises(DomainError):
            pickands_info(2.5)


class TestHomogeneousTail:
    def test_stationary_ou_value(self):
        value, approx = tail_approx(parse_model_id("ou:1"), parse_trend_id("zero"), 10.0)
        assert value == pytest.approx(OU_U10, rel=1e-7)
        assert value == pytest.approx(0.0170, abs=5e-5)
        assert approx.meta["admissibility"] == "not required"

    def test_ou_rate_enters_through_q(self):
        value, _ = tail_approx(parse_model_id("ou:2"), parse_trend_id("zero"), 10.0)
        assert value == pytest.approx(2.0 * OU_U10, rel=1e-7)

    def test_stationary_tail_matches(self):
        assert stationary_tail(RegVarKernel(1.0), 1.0, [1.0], 10.0) == pytest.approx(OU_U10, rel=1e-12)
        assert stationary_tail(RegVarKernel(1.0), 2.0, [1.0], 10.0) == pytest.approx(2 * OU_U10, rel=1e-12)

    def test_log_evaluate_far_tail(self):
        _, approx = tail_approx(parse_model_id("ou:1"), parse_trend_id("zero"), 10.0)
        u = 5000.0
        expected = math.log(math.sqrt(2 / math.pi)) + 0.5 * math.log(u) - 0.5 * u
        assert approx.evaluate(u) == 0.0
        assert approx.log_evaluate(u) == pytest.approx(expected, rel=1e-10)

    def test_bridge_gnu_matches_closed_form(self):
        """The general formula reproduces the bridge closed form, gated by admissibility."""
        g = parse_trend_id("gnu:1")
        for u in (10.0, 20.0):
            value, approx = tail_approx(parse_model_id("bridge"), g, u)
            assert value == pytest.approx(closed_form("bridge-gnu", {"nu": 1.0}, u), rel=1e-7)
        assert approx.meta["admissibility"] == "applicable"

    @pytest.mark.parametrize("model_id,trend_id", [("bridge", "gnu:1"), ("fbm:0.3", "bessel"),
                                                   ("bessel:2", "bessel")])
    def test_trend_shift_scales_tail(self, model_id, trend_id):
        model = parse_model_id(model_id)
        g = parse_trend_id(trend_id)
        c = 1.7
        base, _ = tail_approx(model, g, 12.0, pickands=1.0, check=False)
        shifted, _ = tail_approx(model, g.shifted(c), 12.0, pickands=1.0, check=False)
        assert shifted == pytest.approx(base * math.exp(-0.5 * c), rel=1e-7)

    @pytest.mark.parametrize("model_id,trend_id", [("ou:1", "zero"), ("bridge", "gnu:1"),
                                                   ("fbm:0.3", "bessel"), ("bessel:3", "bessel")])
    def test_decreasing_on_doubling_grid(self, model_id, trend_id):
        _, approx = tail_approx(parse_model_id(model_id), parse_trend_id(trend_id), 8.0, pickands=1.0,
                                check=False)
        logs = [approx.log_evaluate(8.0 * 2 ** i) for i in range(7)]
        assert all(later < earlier for earlier, later in zip(logs, logs[1:]))

    def test_bridge_on_compact_interval(self):
        interval = Interval(0.1, 0.9, True, True)
        model = parse_model_id("bridge", interval=interval)
        value, _ = tail_approx(model, parse_trend_id("gnu:1"), 12.0)
        expected = closed_form("bridge-gnu", {"nu": 1.0, "interval": interval}, 12.0)
        assert value == pytest.approx(expected, rel=1e-8)

    def test_inadmissible_trend_is_refused(self):
        with pytest.raises(InadmissibleError) as info:
            tail_approx(parse_model_id("bridge"), parse_trend_id("gnu:0.7"), 10.0)
        assert info.value.report is not None
        assert info.value.report.overall == "not-applicable"

    def test_divergent_j(self):
        model = parse_model_id("bridge")
        with pytest.raises(DivergenceError):
            tail_approx(model, parse_trend_id("zero"), 10.0, check=False)
        with pytest.raises(DivergenceError):
            j_integral(model.variance, 1.0, parse_trend_id("zero"), model.interval)

    def test_fbm_matches_closed_form(self):
        g = parse_trend_id("bessel")
        value, _ = tail_approx(parse_model_id("fbm:0.3"), g, 15.0, pickands=1.3, check=False)
        expected = closed_form("fbm", {"H": 0.3, "g": g, "pickands": 1.3}, 15.0)
        assert value == pytest.approx(expected, rel=1e-6)

    def test_bessel_literal_constant_is_twice_the_formula(self):
        g = parse_trend_id("bessel")
        for n in (1, 2, 3):
            value, _ = tail_approx(parse_model_id(f"bessel:{n}"), g, 14.0, check=False)
            literal = closed_form("bessel", {"n": n, "g": g}, 14.0)
            assert literal / value == pytest.approx(2.0, rel=1e-7)

    def test_bessel_one_agrees_with_brownian_fbm(self):
        g = parse_trend_id("bessel")
        value, _ = tail_approx(parse_model_id("bessel:1"), g, 14.0, check=False)
        assert value == pytest.approx(closed_form("fbm", {"H": 0.5, "g": g}, 14.0), rel=1e-7)

    @pytest.mark.parametrize("alpha", [1.0, 0.6])
    def test_scalar_moved_between_c_and_k(self, alpha):
        """(c*C, K) and (C, c^(1/2)*K) describe the same local structure."""
        interval = Interval(0.1, 0.9, True, True)
        g = parse_trend_id("gnu:1")
        c = 3.0
        base = build_model(c_source=f"{c}/(2*t*(1-t))", alpha=alpha, interval=interval)
        moved = build_model(c_source="1/(2*t*(1-t))", alpha=alpha, interval=interval,
                            kernel_scale=math.sqrt(c))
        first, _ = tail_approx(base, g, 12.0, pickands=1.0, check=False)
        second, _ = tail_approx(moved, g, 12.0, pickands=1.0, check=False)
        assert first == pytest.approx(second, rel=1e-8)

    def test_heterogeneous_model_needs_hetero_builder(self):
        with pytest.raises(ConfigurationError):
            build_tail_approx(mixed_model(0.75), parse_trend_id("gnu:1"))


class TestHeterogeneousTail:
    def test_mixed_matches_closed_form(self):
        g = parse_trend_id("gnu:1")
        for u in (10.0, 16.0):
            value, approx = tail_approx_hetero(mixed_model(0.75), g, u, check=False)
            assert value == pytest.approx(closed_form("mixed", {"H": 0.75, "g": g}, u), rel=1e-6)
        assert approx.gb == pytest.approx((2 * math.pi) ** -1.5)
        assert approx.poly_exponent == pytest.approx(0.5)

    def test_angular_rule_linear_moments(self):
        """For alpha = 1 the angular integral is linear in rho."""
        rule = AngularRule(2, 2, 1.0)
        assert rule(np.array([1.0, 0.0])) == pytest.approx(math.pi)
        assert rule(np.array([1.0, 1.0])) == pytest.approx(2 * math.pi)
        sphere = AngularRule(3, 3, 1.0)
        assert sphere(np.ones(3)) == pytest.approx(4 * math.pi, rel=1e-10)

    def test_angular_rule_general_alpha(self):
        rule = AngularRule(3, 3, 0.7)
        assert rule(np.ones(3)) == pytest.approx(4 * math.pi, rel=1e-8)
        assert AngularRule(1, 1, 0.5)(np.array([0.5])) == pytest.approx(0.5)

    def test_angular_rule_monte_carlo_branch(self, monkeypatch):
        monkeypatch.setattr(config, "max_quadrature_dim", 1)
        monkeypatch.setattr(config, "angular_mc_samples", 200_000)
        rule = AngularRule(3, 3, 0.7)
        assert rule.method == "monte-carlo"
        assert rule(np.ones(3)) == pytest.approx(4 * math.pi, rel=2e-2)


class TestClosedForms:
    def test_bridge_gnu_shape(self):
        """Ratio between two levels depends on u only through sqrt(u) exp(-u/2)."""
        a = closed_form("bridge-gnu", {"nu": 1.0}, 20.0)
        b = closed_form("bridge-gnu", {"nu": 1.0}, 10.0)
        assert a / b == pytest.approx(math.sqrt(2.0) * math.exp(-5.0), rel=1e-12)

    def test_bridge_gnu_boundary(self):
        with pytest.raises(InadmissibleError):
            closed_form("bridge-gnu", {"nu": 0.75}, 10.0)

    def test_unknown_case_and_domain(self):
        with pytest.raises(DomainError):
            closed_form("sphere", {}, 10.0)
        with pytest.raises(DomainError):
            closed_form("bridge-gnu", {"nu": 1.0}, -1.0)
        with pytest.raises(DomainError):
            closed_form("mixed", {"H": 0.4, "g": "gnu:1"}, 10.0)

    def test_mixed_divergent_trend(self):
        with pytest.raises(InadmissibleError):
            closed_form("mixed", {"H": 0.75, "g": "zero"}, 10.0)

    def test_aliases(self):
        g = parse_trend_id("bessel")
        assert closed_form("cor", {"nu": 1.0}, 12.0) == closed_form("bridge-gnu", {"nu": 1.0}, 12.0)
        assert closed_form("COR2", {"H": 0.5, "g": g}, 12.0) == closed_form("fbm", {"H": 0.5, "g": g}, 12.0)
        assert closed_form("cor4", {"n": 2, "g": g}, 12.0) == closed_form("bessel", {"n": 2, "g": g}, 12.0)
        with pytest.raises(DomainError):
            closed_form("cor5", {}, 12.0)


_RNG = np.random.default_rng(20240611)
SINGLE_TUPLES = [(float(nu), float(H), float(u)) for nu, H, u in
                 zip(_RNG.uniform(0.8, 3.0, 20), _RNG.uniform(0.2, 0.9, 20), _RNG.uniform(8.0, 40.0, 20))]
MIXED_TUPLES = [(float(H), float(u), float(nu)) for H, u, nu in
                zip(_RNG.uniform(0.55, 0.95, 10), _RNG.uniform(8.0, 30.0, 10), _RNG.uniform(1.0, 2.0, 10))]


class TestReductionChain:
    @pytest.mark.parametrize("nu,H,u", SINGLE_TUPLES)
    def test_general_formula_reduces_to_closed_forms(self, nu, H, u):
        bridge, _ = tail_approx(parse_model_id("bridge"), parse_trend_id(f"gnu:{nu!r}"), u, check=False)
        assert bridge == pytest.approx(closed_form("cor", {"nu": nu}, u), rel=1e-7)
        g = parse_trend_id("bessel")
        fbm, _ = tail_approx(parse_model_id(f"fbm:{H!r}"), g, u, pickands=1.1, check=False)
        assert fbm == pytest.approx(closed_form("cor2", {"H": H, "g": g, "pickands": 1.1}, u), rel=1e-6)

    @pytest.mark.parametrize("H,u,nu", MIXED_TUPLES)
    def test_heterogeneous_formula_reduces_to_closed_form(self, H, u, nu):
        g = parse_trend_id(f"gnu:{nu!r}")
        value, _ = tail_approx_hetero(mixed_model(H), g, u, check=False)
        assert value == pytest.approx(closed_form("cor3", {"H": H, "g": g}, u), rel=1e-6)


class TestCriticalValue:
    def test_inverts_ou_example(self):
        result = critical_value(parse_model_id("ou:1"), parse_trend_id("zero"), OU_U10)
        assert result.u == pytest.approx(10.0, rel=1e-6)
        assert result.p == pytest.approx(OU_U10, rel=1e-9)

    def test_prebuilt_approximation(self):
        _, approx = tail_approx(parse_model_id("bridge"), parse_trend_id("gnu:1"), 10.0)
        result = critical_value(None, None, 0.05, approx=approx)
        assert approx.evaluate(result.u) == pytest.approx(0.05, rel=1e-8)

    def test_p_above_range(self):
        with pytest.raises(DomainError):
            critical_value(parse_model_id("ou:1"), parse_trend_id("zero"), 0.9)
        with pytest.raises(DomainError):
            critical_value(parse_model_id("ou:1"), parse_trend_id("zero"), 1.5)

    def test_non_monotone_approximation(self):
        """With ten components the approximation still rises at u = 4."""
        model = parse_model_id("bessel:10")
        with pytest.raises(NonMonotoneError):
            critical_value(model, parse_trend_id("bessel"), 1e-6, check=False)
