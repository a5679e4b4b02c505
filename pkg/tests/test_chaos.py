import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import hermite_e as He
from scipy.integrate import quad

from wick_forge import chaos
from wick_forge.basis import SpectralBasis, laguerre_functions
from wick_forge.chaos import ChaosExpansion, Projection, TestFunction
from wick_forge.ensemble import PathEnsemble
from wick_forge.funcs import make_phi
from wick_forge.suite import algebra_violations, random_expansion


def one_dim(coeffs):
    return ChaosExpansion(1, {((0, n),) if n else (): c for n, c in enumerate(coeffs) if c})


def as_array(X, n):
    return np.array([X.coefficient(((0, k),) if k else ()) for k in range(n)])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=5),
       st.lists(st.floats(-2, 2), min_size=1, max_size=5))
def test_product_matches_hermemul(a, b):
    prod = chaos.multiply(one_dim(a), one_dim(b))
    ref = He.hermemul(a, b)
    assert np.allclose(as_array(prod, ref.size), ref, rtol=1e-12, atol=1e-12)


def test_product_pointwise_multicoordinate():
    rng = np.random.default_rng(3)
    X = random_expansion(rng, 3, 3, 6)
    Y = random_expansion(rng, 3, 3, 6)
    z = rng.normal(size=(50, 3))
    lhs = chaos.multiply(X, Y).evaluate(z)
    assert np.allclose(lhs, X.evaluate(z) * Y.evaluate(z), rtol=1e-11, atol=1e-11)


def test_wick_adds_indices():
    X = ChaosExpansion.hermite({0: 2, 1: 1}, 3, 2.0)
    Y = ChaosExpansion.hermite({1: 1, 2: 3}, 3, -0.5)
    Z = chaos.wick(X, Y)
    assert Z.terms == {((0, 2), (1, 2), (2, 3)): -1.0}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_s_transform_multiplicative_under_wick(seed, f):
    rng = np.random.default_rng(seed)
    X, Y = random_expansion(rng, 4, 3, 5), random_expansion(rng, 4, 3, 5)
    lhs = chaos.s_transform(chaos.wick(X, Y), f)
    rhs = chaos.s_transform(X, f) * chaos.s_transform(Y, f)
    assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-11)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_algebra_laws(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 9))
    X, Y, Z = (random_expansion(rng, K, 4, 4) for _ in range(3))
    worst = algebra_violations(X, Y, Z, float(rng.uniform(0, 3)))
    assert max(worst.values()) <= 1e-12, worst


def test_star_zero_is_product():
    rng = np.random.default_rng(0)
    X, Y = random_expansion(rng, 3, 3, 5), random_expansion(rng, 3, 3, 5)
    assert chaos.star_p(X, Y, 0.0).max_abs_diff(chaos.multiply(X, Y)) < 1e-13


@pytest.mark.parametrize("p", [0.0, 0.5, 2.0, 6.0])
def test_star_on_first_chaos(p):
    # Gamma(A^p)(I_1(u)^2) = I_1(h)^<>2 + |A^-p h|^2
    h = np.array([0.7, -0.2, 0.4])
    X = ChaosExpansion.first_chaos(h)
    u = SpectralBasis(3).power(-p) * h
    ref = chaos.wick(X, X) + ChaosExpansion.constant(float(u @ u), 3)
    assert chaos.star_p(X, X, p).max_abs_diff(ref) < 1e-14


def test_star_rejects_negative_p():
    X = ChaosExpansion.coordinate(0, 2)
    with pytest.raises(ValueError):
        chaos.star_p(X, X, -1.0)


def test_norms():
    assert chaos.norm(ChaosExpansion.hermite({0: 4}, 1)) == pytest.approx(math.sqrt(24))
    h = np.array([0.3, -1.0, 2.0])
    lam = SpectralBasis(3).lam
    X = ChaosExpansion.first_chaos(h)
    assert chaos.norm(X, 1.5) == pytest.approx(np.linalg.norm(lam**1.5 * h), rel=1e-14)


def test_norm_is_second_moment():
    # ||X||_0^2 = E[X^2] by tensor Gauss-Hermite on two coordinates
    rng = np.random.default_rng(5)
    X = random_expansion(rng, 2, 4, 6)
    x, w = He.hermegauss(20)
    w = w / math.sqrt(2 * math.pi)
    zz = np.stack(np.meshgrid(x, x, indexing="ij"), -1).reshape(-1, 2)
    ww = np.outer(w, w).ravel()
    assert chaos.norm(X) ** 2 == pytest.approx(ww @ X.evaluate(zz) ** 2, rel=1e-12)


def test_gamma_scaling_and_inverse():
    X = ChaosExpansion.hermite({0: 1, 2: 2}, 3, 2.0)
    lam = SpectralBasis(3).lam
    assert chaos.gamma(X, 1.0).coefficient({0: 1, 2: 2}) == pytest.approx(2.0 * lam[0] * lam[2] ** 2)
    rng = np.random.default_rng(1)
    Y = random_expansion(rng, 4, 4, 8)
    assert chaos.gamma(chaos.gamma(Y, 2.5), -2.5).max_abs_diff(Y) < 1e-12


def test_degree_cap():
    X = ChaosExpansion.hermite({0: 7}, 1)
    with pytest.raises(chaos.DegreeCapError):
        chaos.wick(X, X)
    with pytest.raises(chaos.DegreeCapError):
        chaos.multiply(X, X, d_max=10)


def test_json_roundtrip():
    rng = np.random.default_rng(2)
    X = random_expansion(rng, 5, 3, 7)
    Y = ChaosExpansion.from_json(X.to_json())
    assert Y.max_abs_diff(X) == 0.0
    assert json.loads(X.to_json())["K"] == 5


def test_s_transform_of_hermite():
    X = ChaosExpansion.hermite({0: 2, 1: 1}, 3, 1.5)
    assert chaos.s_transform(X, [2.0, -1.0, 7.0]) == pytest.approx(1.5 * 4 * -1)


def test_multinomial_wick_power():
    h = np.array([0.5, -1.0, 0.25])
    X = ChaosExpansion.first_chaos(h)
    ref = chaos.wick_power(X, 4)
    got = ChaosExpansion(3, chaos.multinomial_wick_power(h, 4))
    assert got.max_abs_diff(ref) < 1e-14


@pytest.mark.parametrize("sigma", [0.3, 1.0, 2.2])
def test_hermite_projection_cos(sigma):
    # E[cos(sG) He_n(G)] / n! = s^n e^{-s^2/2} cos^{(n)}(0) / n!
    a = chaos.hermite_projection(np.cos, 0.0, sigma, 8, 40)
    d = [1, 0, -1, 0] * 3
    ref = [sigma**n * math.exp(-sigma**2 / 2) * d[n] / math.factorial(n) for n in range(9)]
    assert np.allclose(a, ref, atol=1e-14)


def test_phi_tilde_identity_and_square():
    h = np.array([0.6, 0.3, -0.2])
    X = ChaosExpansion.first_chaos(h)
    p = 1.0
    u = SpectralBasis(3).power(-p) * h
    ident = chaos.phi_tilde(make_phi("identity"), X, p, Projection(4, 20, "exact"))
    assert ident.max_abs_diff(X) < 1e-14
    sq = chaos.phi_tilde(make_phi("square"), X, p, Projection(4, 20, "exact"))
    ref = chaos.wick(X, X) + ChaosExpansion.constant(float(u @ u), 3)
    assert sq.max_abs_diff(ref) < 1e-13


def test_phi_tilde_monte_carlo_agrees_with_exact():
    h = np.array([0.8, 0.4])
    X = ChaosExpansion.first_chaos(h)
    phi = make_phi("cos")
    exact = chaos.phi_tilde(phi, X, 0.5, Projection(3, 30, "exact"))
    mc, err = chaos.phi_tilde(phi, X, 0.5, Projection(3, None, "mc"), PathEnsemble(40_000, 2, seed=9))
    for alpha, e in err.items():
        assert abs(mc.coefficient(alpha) - exact.coefficient(alpha)) <= 4 * e + 1e-12


def test_phi_tilde_mc_needs_growth_bound():
    from wick_forge.funcs import Phi
    phi = Phi("raw", np.exp, np.exp, np.exp, np.exp)
    X = ChaosExpansion.second_chaos(np.eye(2) * 0.1)
    with pytest.raises(ValueError):
        chaos.phi_tilde(phi, X, 1.0, Projection(2), PathEnsemble(100, 2))


def test_bump_coefficients():
    f = TestFunction.from_bump(0.5, 1.5, 2.0, 12)
    for k in (0, 5, 11):
        ref, _ = quad(lambda s: chaos.bump(s, 0.5, 1.5, 2.0) * laguerre_functions(k + 1, s)[k],
                      0.5, 1.5, epsabs=1e-14, limit=200)
        assert f.coeffs[k] == pytest.approx(ref, abs=1e-12)


def test_testfunction_from_dict():
    f = TestFunction.from_dict({"coeffs": [1.0, 2.0]}, K=4)
    assert np.array_equal(f.coeffs, [1.0, 2.0, 0.0, 0.0])
    g = TestFunction.from_dict({"bump": {"a": 0.1, "b": 0.4}}, K=8)
    assert g.K == 8
