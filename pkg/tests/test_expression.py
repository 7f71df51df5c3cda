"""
Tests for the expression grammar and the edge-number arithmetic behind it.
"""

import math

import numpy as np
import pytest

import extended as xm
from errors import InputError
from expression import Expression, parse, parse_params


class TestParse:
    def test_arithmetic_and_precedence(self):
        expr = parse("2*t+1")
        assert expr(0.25) == pytest.approx(1.5)
        assert parse("-t^2")(3.0) == pytest.approx(-9.0)
        assert parse("2^3^2")(0.0) == pytest.approx(512.0)
        assert parse("(1+t)/(1-t)")(0.5) == pytest.approx(3.0)

    def test_functions_and_constants(self):
        assert parse("ln(e)")(0.1) == pytest.approx(1.0)
        assert parse("log(exp(2))")(0.1) == pytest.approx(2.0)
        assert parse("sqrt(t)")(0.25) == pytest.approx(0.5)
        assert parse("pow(t, 3)")(2.0) == pytest.approx(8.0)
        assert parse("loglog(t)")(math.e ** math.e) == pytest.approx(1.0)
        assert parse("a + pi", {"a": 1.0})(0.0) == pytest.approx(1.0 + math.pi)

    def test_parameters(self):
        expr = Expression("1/(2*t^(2*H))", {"H": 0.25})
        assert expr(0.25) == pytest.approx(1.0)

    def test_array_evaluation(self):
        t = np.array([0.1, 0.2, 0.4])
        np.testing.assert_allclose(parse("t*(1-t)")(t), t * (1 - t))

    def test_constant_broadcasts_over_arrays(self):
        values = parse("1")(np.array([0.1, 0.2, 0.3]))
        assert values.shape == (3,)
        np.testing.assert_allclose(values, 1.0)

    @pytest.mark.parametrize("source", ["", "   ", "2*+", "t +", "(t", "x*t", "foo(t)", "pow(t)", "t $ 2"])
    def test_malformed_expressions_raise(self, source):
        with pytest.raises(InputError):
            parse(source)

    def test_error_reports_expression(self):
        with pytest.raises(InputError) as info:
            parse("1/(2*s)")
        assert "s" in str(info.value)


class TestParseParams:
    def test_assignments(self):
        assert parse_params("nu=1, rho=2.5") == {"nu": 1.0, "rho": 2.5}
        assert parse_params("") == {}

    @pytest.mark.parametrize("text", ["nu", "1x=2", "nu=abc"])
    def test_invalid(self, text):
        with pytest.raises(InputError):
            parse_params(text)


class TestEdgeNumbers:
    def test_distance_keeps_log_magnitude(self):
        d = xm.EdgeNumber.distance(1e5)
        assert float(d) == 0.0
        assert xm.log_abs(d) == pytest.approx(-1e5)
        assert float(xm.ln(d)) == pytest.approx(-1e5)

    def test_products_cancel_exactly(self):
        """C(t) * t stays finite for t far below the float range."""
        d = xm.EdgeNumber.distance(1e5)
        assert float(Expression("1/(2*t)")(d) * d) == pytest.approx(0.5)

    def test_point_near_one(self):
        t = xm.EdgeNumber.near(1, 50.0)
        assert float(t) == pytest.approx(1.0)
        assert xm.log_abs(1.0 - t) == pytest.approx(-50.0)

    def test_float_dispatch(self):
        assert xm.power(4.0, 0.5) == pytest.approx(2.0)
        assert xm.log_abs(0.0) == -math.inf
        assert xm.maximum(1.0, 2.0) == 2.0
