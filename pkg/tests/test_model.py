"""
Tests for kernels, local variances, the f-transform and the model catalog.
"""

import math

import numpy as np
import pytest
from scipy import special

from errors import ConfigurationError, DomainError, InputError, NotApplicableError
from expression import Expression
from model import (POWER_LOG, ChiSquareModel, FTransform, Interval, LocalVariance, RegVarKernel,
                   bm_correlation, bridge_component, bridge_correlation, build_model, f_transform,
                   fbm_correlation, kernel_eval, mixed_model, ou_component, parse_model_id, parse_trend_id,
                   partition_points, q_of_u)
from quadrature import FINITE, INFINITE


class TestKernel:
    def test_power_kernel(self):
        kernel = RegVarKernel(1.0)
        assert kernel(0.25) == pytest.approx(0.5)
        assert kernel_eval(kernel, 0.0) == 0.0

    def test_q_of_u_power(self):
        assert q_of_u(RegVarKernel(1.0), 4.0) == pytest.approx(0.25)
        assert q_of_u(RegVarKernel(1.0, scale=2.0), 4.0) == pytest.approx(1.0 / 16.0)
        assert q_of_u(RegVarKernel(0.6), 10.0) == pytest.approx(10.0 ** (-1.0 / 0.6))

    def test_q_of_u_power_log_inverts_kernel(self):
        kernel = RegVarKernel(1.0, POWER_LOG, beta=1.0)
        for u in (10.0, 100.0, 1e4):
            q = q_of_u(kernel, u)
            assert kernel(q) == pytest.approx(u ** -0.5, rel=1e-9)

    def test_squared_matches_scalar(self):
        kernel = RegVarKernel(1.4, POWER_LOG, beta=0.5, scale=1.5)
        lags = np.array([0.0, 1e-3, 0.1, 0.5])
        expected = [kernel(x) ** 2 for x in lags]
        np.testing.assert_allclose(kernel.squared(lags), expected, rtol=1e-12)

    def test_invalid_kernels(self):
        with pytest.raises(DomainError):
            RegVarKernel(2.5)
        with pytest.raises(ConfigurationError):
            RegVarKernel(1.0, scale=0.0)
        with pytest.raises(DomainError):
            kernel_eval(RegVarKernel(1.0), -0.1)
        with pytest.raises(DomainError):
            q_of_u(RegVarKernel(1.0), 0.0)


class TestFTransform:
    def setup_method(self):
        self.bridge = bridge_component().variance
        self.unit = ou_component(1.0).variance

    def test_bridge_is_half_logit(self):
        """For C = 1/(2t(1-t)) and alpha = 1, f(t) = logit(t)/2."""
        transform = FTransform(self.bridge, 1.0)
        for t in (1e-6, 0.1, 0.5, 0.8, 1 - 1e-6):
            assert transform(t) == pytest.approx(0.5 * special.logit(t), rel=1e-9, abs=1e-12)

    def test_on_points_matches_pointwise(self):
        transform = FTransform(self.bridge, 1.0)
        ts = np.array([0.9, 1e-8, 0.3, 0.5, 0.7])
        np.testing.assert_allclose(transform.on_points(ts), 0.5 * special.logit(ts), rtol=1e-9, atol=1e-12)

    def test_inverse_and_advance(self):
        transform = FTransform(self.bridge, 1.0)
        assert transform.inverse(-3.0) == pytest.approx(special.expit(-6.0), rel=1e-9)
        assert transform.inverse(0.0) == 0.5
        s = transform.advance(0.3, 0.2)
        assert special.logit(s) == pytest.approx(special.logit(0.3) + 0.4, rel=1e-10)

    def test_endpoint_limits(self):
        assert f_transform(self.bridge, 1.0, 0.0) == -math.inf
        assert f_transform(self.bridge, 1.0, 1.0) == math.inf
        assert f_transform(self.unit, 1.0, 0.0) == pytest.approx(-0.5, rel=1e-8)
        assert f_transform(self.unit, 1.0, 0.75) == pytest.approx(0.25, rel=1e-10)
        with pytest.raises(DomainError):
            f_transform(self.unit, 1.0, 1.5)

    def test_limit_status_uses_flags(self):
        assert FTransform(self.bridge, 1.0).limit_status(0) == INFINITE
        assert FTransform(self.unit, 1.0).limit_status(1) == FINITE

    def test_limit_status_computed_without_flags(self):
        variance = LocalVariance(Expression("1/(2*(1-t))"))
        transform = FTransform(variance, 1.0)
        assert transform.limit_status(0) == FINITE
        assert transform.limit_status(1) == INFINITE

    def test_partition_points(self):
        assert partition_points(self.bridge, 1.0, 1.0, 0, 0) == 0.5
        assert partition_points(self.bridge, 1.0, 1.0, 0, 3) == pytest.approx(special.expit(-6.0), rel=1e-9)
        assert partition_points(self.bridge, 1.0, 0.5, 1, 4) == pytest.approx(special.expit(4.0), rel=1e-9)
        with pytest.raises(NotApplicableError):
            partition_points(self.unit, 1.0, 1.0, 0, 2)
        with pytest.raises(DomainError):
            partition_points(self.bridge, 1.0, 0.0, 0, 2)


class TestCorrelations:
    def test_bridge_correlation(self):
        t = np.array([0.1, 0.4, 0.9])
        r = bridge_correlation(t[:, None], t[None, :])
        np.testing.assert_allclose(np.diag(r), 1.0)
        np.testing.assert_allclose(r, r.T)
        assert r[0, 1] == pytest.approx(math.sqrt(0.1 * 0.6 / (0.4 * 0.9)))

    def test_fbm_half_is_brownian(self):
        s, t = np.array([0.2, 0.5]), np.array([0.7, 0.9])
        np.testing.assert_allclose(fbm_correlation(0.5)(s, t), bm_correlation(s, t), rtol=1e-12)


class TestCatalog:
    def test_bridge(self):
        model = parse_model_id("bridge")
        assert model.n == 1 and model.k == 1
        assert model.interval == Interval(0.0, 1.0)
        assert model.alpha == 1.0

    def test_ou_absorbs_rate_into_kernel(self):
        model = parse_model_id("ou:2")
        assert model.kernel.scale == pytest.approx(math.sqrt(2.0))
        assert model.interval.closed_lo and model.interval.closed_hi
        assert model.variance(0.3) == pytest.approx(1.0)

    def test_bessel_and_weights(self):
        model = parse_model_id("bessel:3")
        assert model.n == 3 and model.k == 3
        weighted = parse_model_id("bridge", b=[1.0, 1.0, 0.5])
        assert weighted.k == 2

    def test_fbm(self):
        model = parse_model_id("fbm:0.3")
        assert model.alpha == pytest.approx(0.6)
        assert model.variance(0.5) == pytest.approx(1.0 / (2.0 * 0.5 ** 0.6))

    def test_mixed(self):
        model = mixed_model(0.75)
        assert model.heterogeneous and model.k == 2 and model.n == 3
        with pytest.raises(DomainError):
            mixed_model(0.4)

    @pytest.mark.parametrize("model_id", ["fbm", "foo", "bessel:1.5", "bessel:0", "ou:x"])
    def test_bad_ids(self, model_id):
        with pytest.raises(InputError):
            parse_model_id(model_id)

    def test_weight_validation(self):
        component = bridge_component()
        with pytest.raises(ConfigurationError):
            ChiSquareModel((0.5,), (component,))
        with pytest.raises(ConfigurationError):
            ChiSquareModel((1.0, 0.5, 0.7), (component,) * 3)
        with pytest.raises(ConfigurationError):
            ChiSquareModel((1.0, 1.0), (component,))

    def test_custom_model(self):
        model = build_model(c_source="1/(2*t*(1-t))", alpha=1.0, interval=Interval(0.1, 0.9, True, True))
        assert model.variance(0.5) == pytest.approx(2.0)
        with pytest.raises(InputError):
            build_model(c_source="1")

    @pytest.mark.parametrize("c_source", ["t-0.5", "-1/(2*t)", "ln(t)"])
    def test_custom_variance_must_be_positive(self, c_source):
        with pytest.raises(DomainError, match="not positive"):
            build_model(c_source=c_source, alpha=1.0)

    def test_positivity_checked_only_inside_interval(self):
        model = build_model(c_source="t-0.05", alpha=1.0, interval=Interval(0.1, 0.9, True, True))
        assert model.variance(0.5) == pytest.approx(0.45)
        with pytest.raises(DomainError):
            build_model(c_source="t-0.05", alpha=1.0)

    def test_interval_truncation(self):
        assert Interval(0.0, 1.0).truncated(1e-3) == Interval(1e-3, 1.0 - 1e-3, True, True)
        ou = parse_model_id("ou:1")
        assert ou.interval.truncated(1e-3, ou.variance) == Interval(0.0, 1.0, True, True)
        with pytest.raises(DomainError):
            Interval(0.5, 0.2)


class TestTrends:
    def test_gnu_is_twice_g_nu(self):
        g = parse_trend_id("gnu:1")
        c = math.log(1.0 - math.log(4 * 0.01 * 0.99))
        assert g(0.01) == pytest.approx(2.0 * (c + math.log(1.0 + c * c)), rel=1e-12)
        assert g(0.2) == pytest.approx(g(0.8), rel=1e-12)

    def test_named_trends(self):
        assert parse_trend_id(None)(0.3) == 0.0
        assert parse_trend_id("const:2.5")(0.3) == pytest.approx(2.5)
        assert parse_trend_id("bessel")(0.01) == pytest.approx(4.0 * math.log(math.log(math.e ** 2 / 0.01)))
        rho = parse_trend_id("grho:3")
        expected = 2 * math.log(math.log(math.e ** 2 / 0.1)) + 6 * math.log(math.log(math.log(math.e ** 3 / 0.1)))
        assert rho(0.1) == pytest.approx(expected)
        assert parse_trend_id("expr:a*t", {"a": 3.0})(0.5) == pytest.approx(1.5)

    @pytest.mark.parametrize("trend_id", ["expr:t-1", "expr:ln(t)", "expr:-0.1"])
    def test_expression_trend_must_be_nonnegative(self, trend_id):
        with pytest.raises(DomainError, match="negative"):
            parse_trend_id(trend_id)

    @pytest.mark.parametrize("trend_id", ["const:-1", "const", "gnu:x", "wave:1"])
    def test_bad_trends(self, trend_id):
        with pytest.raises(InputError):
            parse_trend_id(trend_id)
