import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ptcontrol.errors import DomainError, ParameterError, SingularityError
from ptcontrol.scalarmath import (
    MAX_ORDER, ShapeParams, TimeGain, h_derivative, h_eval, lemma1_envelope, mu_derivative,
)

mpmath.mp.dps = 50


def h_reference(x, a, b):
    """The defining quotient in 50-digit arithmetic (numerator via expm1)."""
    x, a, b = mpmath.mpf(x), mpmath.mpf(a), mpmath.mpf(b)
    num = mpmath.expm1(a * x) - mpmath.expm1(-b * x)
    return num / (a * mpmath.exp(a * x) + b * mpmath.exp(-b * x))


@st.composite
def shapes(draw, lo=0.01, hi=10.0):
    a = draw(st.floats(lo, hi))
    b = draw(st.floats(lo, a))
    return ShapeParams(a, b)


# -- ShapeParams / TimeGain ---------------------------------------------------


@pytest.mark.parametrize("a,b", [(0, 1), (-1, -1), (1, 2), (math.nan, 1), (1, math.inf)])
def test_shape_params_rejects_invalid(a, b):
    with pytest.raises(ParameterError):
        ShapeParams(a, b)


def test_shape_params_bounds():
    p = ShapeParams(2.0, 0.5)
    assert p.upper == 0.5 and p.lower == -2.0


@pytest.mark.parametrize("t_p", [0.0, -1.0, math.inf])
def test_time_gain_rejects_invalid(t_p):
    with pytest.raises(ParameterError):
        TimeGain(t_p)


# -- h_eval ----------------------------------------------------------------------


def test_h_examples():
    assert h_eval(0.0, ShapeParams(1, 1)) == 0.0
    assert h_eval(1.0, ShapeParams(1, 1)) == pytest.approx(0.7615942, abs=1e-7)
    assert abs(h_eval(1e6, ShapeParams(2, 1)) - 0.5) <= 1e-12
    assert abs(h_eval(0.5, ShapeParams(1e-4, 1e-4)) - 0.5) <= 1e-4


@pytest.mark.parametrize("x", [math.nan, math.inf, -math.inf])
def test_h_rejects_non_finite(x):
    with pytest.raises(DomainError):
        h_eval(x, ShapeParams(1, 1))


@settings(max_examples=300, deadline=None)
@given(x=st.floats(-30, 30), p=shapes(0.05, 5.0))
def test_h_matches_high_precision_quotient(x, p):
    ref = float(h_reference(x, p.a, p.b))
    assert h_eval(x, p) == pytest.approx(ref, rel=1e-13, abs=1e-300)


@settings(max_examples=500, deadline=None)
@given(x=st.floats(-1e6, 1e6), p=shapes())
def test_h_bounds(x, p):
    assert p.lower <= h_eval(x, p) <= p.upper


@pytest.mark.parametrize("a,b", [(1, 1), (2, 0.5), (10, 3), (0.1, 0.01)])
def test_h_limits_reached(a, b):
    p = ShapeParams(a, b)
    x = 1e3 / (a + b)
    assert abs(h_eval(x, p) - 1 / a) <= 1e-9
    assert abs(h_eval(-x, p) + 1 / b) <= 1e-9


def test_h_overflow_safe():
    p = ShapeParams(10, 10)
    for x in (1e8, -1e8):
        v = h_eval(x, p)
        assert math.isfinite(v) and p.lower <= v <= p.upper


@settings(max_examples=300, deadline=None)
@given(x=st.floats(-50, 50), p=shapes())
def test_h_sign_inequality(x, p):
    # x h(x) >= |x| h(|x|), i.e. h(-y) <= -h(y) for y >= 0 since b <= a
    assert x * h_eval(x, p) - abs(x) * h_eval(abs(x), p) >= -1e-12


@settings(max_examples=200, deadline=None)
@given(x=st.floats(-100, 100), a=st.floats(0.01, 10))
def test_h_odd_when_symmetric(x, a):
    p = ShapeParams(a, a)
    assert abs(h_eval(-x, p) + h_eval(x, p)) <= 1e-14


def test_h_small_parameter_limit():
    xs = np.linspace(-10, 10, 2001)
    sups = [max(abs(h_eval(x, ShapeParams(eps, eps)) - x) for x in xs) for eps in (1e-2, 1e-3, 1e-4)]
    assert sups[0] > sups[1] > sups[2]
    assert sups[-1] < 1e-2


# -- h_derivative -----------------------------------------------------------------


def test_h_derivative_examples():
    assert h_derivative(0.0, ShapeParams(1, 1), 1) == pytest.approx(1.0, abs=1e-15)
    p = ShapeParams(2, 1)
    fd = (h_eval(0.7 + 1e-6, p) - h_eval(0.7 - 1e-6, p)) / 2e-6
    assert h_derivative(0.7, p, 1) == pytest.approx(fd, abs=1e-6)


@pytest.mark.parametrize("x", [-3.0, -0.4, 0.0, 0.25, 2.0])
def test_h_derivative_order_zero(x):
    p = ShapeParams(1.5, 0.5)
    assert h_derivative(x, p, 0) == h_eval(x, p)


@pytest.mark.parametrize("order", range(1, 7))
@pytest.mark.parametrize("x", [-2.5, -0.3, 0.0, 0.4, 1.7])
@pytest.mark.parametrize("a,b", [(1.0, 1.0), (2.0, 0.7)])
def test_h_derivative_matches_high_precision(order, x, a, b):
    ref = float(mpmath.diff(lambda v: h_reference(v, a, b), x, order))
    scale = max(1.0, abs(ref))
    assert abs(h_derivative(x, ShapeParams(a, b), order) - ref) <= 1e-11 * scale


@settings(max_examples=300, deadline=None)
@given(x=st.floats(-50, 50), p=shapes(0.01, 5.0))
def test_h_strictly_increasing(x, p):
    assert h_derivative(x, p, 1) > 0


def test_h_derivative_order_limits():
    p = ShapeParams(1, 1)
    h_derivative(0.3, p, MAX_ORDER)
    with pytest.raises(ParameterError):
        h_derivative(0.3, p, MAX_ORDER + 1)
    with pytest.raises(DomainError):
        h_derivative(math.nan, p, 1)


# -- mu ---------------------------------------------------------------------------


def test_mu_examples():
    assert mu_derivative(0, TimeGain(6), 0) == pytest.approx(1 / 6)
    assert mu_derivative(0, TimeGain(2), 1) == 0.25
    assert mu_derivative(0, TimeGain(1), 2) == 2.0
    assert TimeGain(4)(2.0) == 0.5


@pytest.mark.parametrize("t", [1.0, 1.5])
def test_mu_singular_at_and_after_tp(t):
    with pytest.raises(SingularityError):
        mu_derivative(t, TimeGain(1.0), 0)


@pytest.mark.parametrize("order", range(0, 5))
def test_mu_derivative_finite_difference(order):
    g, t, d = TimeGain(3.0), 1.2, 1e-6
    fd = (mu_derivative(t + d, g, order) - mu_derivative(t - d, g, order)) / (2 * d)
    assert mu_derivative(t, g, order + 1) == pytest.approx(fd, rel=1e-7)


# -- envelope ---------------------------------------------------------------------


def test_envelope_at_start_is_initial_value():
    v = lemma1_envelope(1.0, ShapeParams(1, 1), 2.0, TimeGain(1.0), 0.0)
    assert v == pytest.approx(math.e - 1 / math.e, rel=1e-15)
    assert v == pytest.approx(2.3504, abs=1e-4)


def test_envelope_vanishes_at_tp():
    p, g = ShapeParams(1.3, 0.4), TimeGain(2.0)
    assert lemma1_envelope(2.0, p, 3.0, g, 2.0) == 0.0
    assert lemma1_envelope(2.0, p, 3.0, g, 2.0 - 1e-9) < 1e-20


def test_envelope_rejects_small_k_and_late_t():
    p, g = ShapeParams(1, 1), TimeGain(1.0)
    with pytest.raises(ParameterError):
        lemma1_envelope(1.0, p, 1.0, g, 0.0)
    with pytest.raises(SingularityError):
        lemma1_envelope(1.0, p, 2.0, g, 1.5)
    with pytest.raises(DomainError):
        lemma1_envelope(-1.0, p, 2.0, g, 0.0)
