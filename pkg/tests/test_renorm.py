import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wick_forge import renorm
from wick_forge.chaos import ChaosExpansion, wick_power
from wick_forge.funcs import make_phi


@pytest.mark.parametrize("t", [0.1, 0.8, 2.5])
def test_heat_coeffs_cos(t):
    # P_t cos = e^{-t/2} cos, so d_n = e^{-t/2} cos^{(n)}(0) / n!
    c = renorm.heat_semigroup_coeffs(make_phi("cos"), t, 10)
    d = [1, 0, -1, 0] * 3
    ref = [math.exp(-t / 2) * d[n] / math.factorial(n) for n in range(11)]
    assert np.allclose(c.d, ref, atol=1e-14)
    assert c.kuo_moment == pytest.approx((1 + math.exp(-2 * t)) / 2, rel=1e-13)


def test_kuo_residual_small():
    c = renorm.heat_semigroup_coeffs(make_phi("cos"), 0.3, 12)
    assert c.kuo_residual < 1e-9


def test_quadrature_mismatch_raised():
    with pytest.raises(renorm.QuadratureMismatch):
        renorm.heat_semigroup_coeffs(make_phi("cos:3"), 2.0, 3, tol=1e-9)
    with pytest.raises(ValueError):
        renorm.heat_semigroup_coeffs(make_phi("cos"), 1.0, 10, order=20)


def test_wick_compose_matches_wick_powers():
    h = np.array([0.4, -0.3, 0.2])
    X = ChaosExpansion.first_chaos(h)
    d = [0.5, 1.0, -0.25, 0.125]
    ref = ChaosExpansion.constant(0.5, 3)
    for n in range(1, 4):
        ref = ref + wick_power(X, n) * d[n]
    assert renorm.wick_compose(d, h).max_abs_diff(ref) < 1e-15


@pytest.mark.parametrize("phi", ["cos", "sin", "poly:0.3,2.0,-0.5"])
def test_proposition(phi):
    r = renorm.proposition_check(make_phi(phi), [0.6, 0.3, -0.2, 0.1], 1.5)
    assert r.discrepancy < 1e-8


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=4), st.floats(0.0, 3.0))
def test_error_bound_property(h, p):
    if not any(abs(v) > 1e-3 for v in h):
        return
    r = renorm.error_bound_check(make_phi("sin"), h, p)
    assert r.passed


def test_error_bound_zero_cases():
    h = [0.5, 0.2]
    r0 = renorm.error_bound_check(make_phi("cos"), h, 0.0)
    assert r0.lhs < 1e-14 and r0.rhs == 0.0 and r0.passed
    lin = renorm.error_bound_check(make_phi("poly:0.3,2.0"), h, 1.0)
    assert lin.lhs < 1e-13 and lin.rhs == 0.0 and lin.passed


def test_error_bound_needs_finite_sup():
    with pytest.raises(ValueError):
        renorm.error_bound_check(make_phi("poly:0,0,0,1"), [0.5], 1.0)


def test_bound_constant_sweep_is_decreasing():
    r = renorm.error_bound_check(make_phi("sin"), [0.8, 0.4], 1.0)
    assert r.sweep_rhs[-1] == pytest.approx(r.rhs)
    assert all(b <= a for a, b in zip(r.sweep_rhs, r.sweep_rhs[1:]))
