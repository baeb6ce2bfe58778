import math

import numpy as np
import pytest

from dirfem.fem import AnalyticFunction
from dirfem.functions import BUILTIN_FUNCTION_NAMES, analytic_function


def _fd_gradient(f, x, y, eps=1e-6):
    gx = (f(x + eps, y) - f(x - eps, y)) / (2 * eps)
    gy = (f(x, y + eps) - f(x, y - eps)) / (2 * eps)
    return gx, gy


def test_polynomial_parsing_basics():
    f = analytic_function("x + y")
    assert f(1.0, 2.0) == pytest.approx(3.0)
    gx, gy = f.gradient(0.3, 0.7)
    assert gx == pytest.approx(1.0) and gy == pytest.approx(1.0)

    g = analytic_function("x^2 - y^2")  # caret works as power
    assert g(3.0, 2.0) == pytest.approx(5.0)
    gx, gy = g.gradient(3.0, 2.0)
    assert gx == pytest.approx(6.0) and gy == pytest.approx(-4.0)

    h = analytic_function("2*x*y + 0.5")
    assert h(2.0, 3.0) == pytest.approx(12.5)


def test_constants_and_numbers():
    assert analytic_function("0")(5.0, 5.0) == 0.0
    assert analytic_function(2)(0.0, 0.0) == pytest.approx(2.0)
    assert analytic_function(1.5)(1.0, -1.0) == pytest.approx(1.5)
    assert analytic_function("zero")(0.3, 0.4) == 0.0
    assert analytic_function(None) is None


def test_passthrough_and_wrapping():
    f = AnalyticFunction(lambda x, y: x)
    assert analytic_function(f) is f
    wrapped = analytic_function(lambda x, y: x * y)
    assert isinstance(wrapped, AnalyticFunction)
    assert wrapped(2.0, 4.0) == pytest.approx(8.0)


def test_rejects_unknown_symbols_and_junk():
    for bad in ("x + z", "sin(x)", "__import__('os')", "x**y", "1/x"):
        with pytest.raises(ValueError):
            analytic_function(bad)


def test_polynomial_gradients_match_finite_differences():
    f = analytic_function("x^3 - 3*x*y^2 + 2*y")
    pts = [(0.4, 0.2), (-0.7, 1.1), (2.0, -0.5)]
    for x, y in pts:
        gx, gy = f.gradient(x, y)
        fx, fy = _fd_gradient(f, x, y)
        assert gx == pytest.approx(fx, abs=1e-7)
        assert gy == pytest.approx(fy, abs=1e-7)


def test_builtin_function_names():
    assert "singular_2_3" in BUILTIN_FUNCTION_NAMES
    assert "zero" in BUILTIN_FUNCTION_NAMES


class TestSingular23:
    """r^{2/3} sin(2 theta / 3) over the 270-degree wedge whose legs are
    the positive x-axis and the negative y-axis."""

    def setup_method(self):
        self.f = analytic_function("singular_2_3")

    def test_vanishes_on_both_legs(self):
        for x in (0.2, 0.5, 1.0):
            assert self.f(x, 0.0) == pytest.approx(0.0, abs=1e-14)
        for y in (-0.2, -0.5, -1.0):
            assert self.f(0.0, y) == pytest.approx(0.0, abs=1e-13)

    def test_positive_inside_the_wedge(self):
        assert self.f(0.3, 0.3) > 0
        assert self.f(-0.4, 0.4) > 0
        assert self.f(-0.4, -0.4) > 0

    def test_homogeneous_of_degree_two_thirds(self):
        v1 = self.f(0.3, 0.2)
        v2 = self.f(0.6, 0.4)
        assert v2 == pytest.approx(2 ** (2.0 / 3.0) * v1)

    def test_harmonic_away_from_corner(self):
        eps = 1e-4
        for x, y in [(0.5, 0.5), (-0.6, 0.2), (-0.3, -0.7)]:
            lap = (
                self.f(x + eps, y)
                + self.f(x - eps, y)
                + self.f(x, y + eps)
                + self.f(x, y - eps)
                - 4.0 * self.f(x, y)
            ) / eps**2
            assert abs(lap) < 1e-5

    def test_gradient_matches_finite_differences(self):
        for x, y in [(0.5, 0.5), (-0.6, 0.2), (-0.3, -0.7)]:
            gx, gy = self.f.gradient(x, y)
            fx, fy = _fd_gradient(self.f, x, y)
            assert gx == pytest.approx(fx, abs=1e-7)
            assert gy == pytest.approx(fy, abs=1e-7)

    def test_peak_at_mid_wedge(self):
        # sin(2 theta/3) is maximal at theta = 3*pi/4, on the ray y = -x
        r = 0.5
        theta = 3 * math.pi / 4
        val = self.f(r * math.cos(theta), r * math.sin(theta))
        assert val == pytest.approx(r ** (2.0 / 3.0))
