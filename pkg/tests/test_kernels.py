import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from qitraj import InvalidArgumentError, eval_kernel, make_kernel, measured_order, moment

X = sp.symbols("x", real=True)
GAUSS = sp.exp(-(X**2)) / sp.sqrt(sp.pi)

# symbolic oracle formulas, written from the generalized Laguerre definition
SYMBOLIC = {
    1: GAUSS,
    2: sp.assoc_laguerre(1, sp.Rational(1, 2), X**2) * GAUSS,
    3: sp.assoc_laguerre(2, sp.Rational(1, 2), X**2) * GAUSS,
    4: sp.assoc_laguerre(4, sp.Rational(1, 2), X**2) * GAUSS,
    5: sp.sqrt(sp.E / sp.pi) * sp.exp(-(X**2)) * sp.cos(sp.sqrt(2) * X),
    6: 1 / (sp.pi * sp.cosh(X)),
}
ORDERS = {1: 2, 2: 4, 3: 6, 4: 10, 5: 4, 6: 2}


def symbolic_moment(kid, j):
    if kid == 6:
        # int x^j sech(x) dx / pi: 1 for j = 0, pi^2/4 for j = 2
        return {0: 1.0, 2: math.pi**2 / 4}[j]
    return float(sp.integrate(X**j * SYMBOLIC[kid], (X, -sp.oo, sp.oo)))


def test_orders_from_table():
    assert make_kernel(1).order == 2
    assert make_kernel(4).order == 10
    assert {k: make_kernel(k).order for k in ORDERS} == ORDERS


@pytest.mark.parametrize("bad", [0, 7, -1, 1.0, True, "1"])
def test_invalid_id(bad):
    with pytest.raises(InvalidArgumentError):
        make_kernel(bad)


def test_values_at_origin():
    assert eval_kernel(make_kernel(1), 0) == pytest.approx(1 / math.sqrt(math.pi), abs=1e-7)
    assert eval_kernel(make_kernel(6), 0) == pytest.approx(1 / math.pi, abs=1e-7)


def test_truncation_beyond_radius():
    assert eval_kernel(make_kernel(1), 10) == 0.0


@pytest.mark.parametrize("kid", range(1, 7))
def test_formula_matches_symbolic(kid):
    k = make_kernel(kid)
    f = sp.lambdify(X, SYMBOLIC[kid], "numpy")
    x = np.linspace(-4.0, 4.0, 81)
    np.testing.assert_allclose(eval_kernel(k, x), f(x), rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("kid", range(1, 7))
def test_moments_against_symbolic_integrals(kid):
    k = make_kernel(kid)
    order = ORDERS[kid]
    assert moment(k, 0) == pytest.approx(1.0, abs=1e-9)
    assert moment(k, 1) == 0.0
    for j in range(2, order + 1, 2):
        assert moment(k, j) == pytest.approx(symbolic_moment(kid, j), rel=1e-7, abs=1e-7)


@pytest.mark.parametrize("kid", range(1, 6))
def test_moments_over_truncated_support(kid):
    # the package integrates over [-radius, radius]; the tail it drops is
    # what separates it from the full-line value
    k = make_kernel(kid)
    r = sp.Float(k.eval_radius, 30)
    for j in range(0, ORDERS[kid] + 1, 2):
        exact = float(sp.Integral(X**j * SYMBOLIC[kid], (X, -r, r)).evalf(20))
        assert moment(k, j) == pytest.approx(exact, abs=1e-10)


def test_vanishing_second_moment_of_psi2():
    assert abs(moment(make_kernel(2), 2)) <= 1e-9


@pytest.mark.parametrize("kid", range(1, 7))
def test_measured_order(kid):
    assert measured_order(make_kernel(kid)) == ORDERS[kid]


def test_moment_index_range():
    with pytest.raises(InvalidArgumentError):
        moment(make_kernel(1), 13)


@pytest.mark.parametrize("kid", range(1, 7))
def test_radius_bounds_tail(kid):
    k = make_kernel(kid)
    x = np.linspace(k.eval_radius, k.eval_radius + 20, 2001)
    assert np.max(np.abs(k._psi(x))) < 1e-12
    # the radius is not excessively large either
    assert abs(k._psi(k.eval_radius - 1.0)) > 1e-13


def test_sech_radius():
    # (1/pi) e^{-r} ~ 1e-12 gives r ~ 26.5; the scan lands within a unit of that
    assert make_kernel(6).eval_radius == pytest.approx(28, abs=2)


def test_nonfinite_argument():
    with pytest.raises(InvalidArgumentError):
        eval_kernel(make_kernel(1), np.nan)


@given(st.integers(1, 6), st.floats(-40, 40, allow_nan=False))
def test_even(kid, x):
    k = make_kernel(kid)
    assert eval_kernel(k, x) == eval_kernel(k, -x)


def test_array_shape_preserved():
    assert eval_kernel(make_kernel(2), np.zeros((3, 4))).shape == (3, 4)
