import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wick_forge import sde
from wick_forge.chaos import TestFunction
from wick_forge.ensemble import PathEnsemble
from wick_forge.funcs import make_drift
from wick_forge.suite import fixture_testfunction

# E[exp(z^T M z + b^T z + kappa)] for the fixture below by 2-D mpmath quadrature
MGF_ORACLE = 1.2786340549826927663


def test_gaussian_mgf_oracle():
    M = np.array([[0.1, 0.03], [0.03, 0.05]])
    val = sde.gaussian_quadratic_mgf(M, np.array([0.2, -0.1]), 0.05)
    assert val == pytest.approx(MGF_ORACLE, rel=1e-13)


def test_gaussian_mgf_beyond_domain():
    with pytest.raises(sde.BeyondLifetimeError):
        sde.gaussian_quadratic_mgf(np.eye(2) * 0.6, np.zeros(2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_quadratic_shift_expansion(seed):
    rng = np.random.default_rng(seed)
    M, c, z = rng.normal(size=(4, 4)), rng.normal(size=4), rng.normal(size=4)
    b, kappa = sde.quadratic_shift(M, c)
    lhs = (z + c) @ M @ (z + c) - np.trace(M)
    assert lhs == pytest.approx(z @ M @ z + b @ z + kappa, rel=1e-12, abs=1e-12)


def test_life_time_values():
    assert sde.life_time(1.0) == pytest.approx(0.26743625534293, abs=1e-6)
    assert sde.life_time(1.5) == pytest.approx(0.60328429594683, abs=1e-5)


def test_lifetime_threshold():
    r = sde.lifetime_threshold(1.0)
    assert r.T <= r.t_star
    assert r.t_star == pytest.approx(0.58444, abs=1e-4)
    assert math.isinf(sde.lifetime_threshold(2.0).t_star)
    with pytest.raises(ValueError):
        sde.lifetime_threshold(0.5)


def test_exp2zeta_closed_form_vs_samples():
    p, t, K = 1.5, 0.2, 32
    proc = sde.QwnProcess(K, p)
    z = PathEnsemble(100_000, K, seed=4).all()
    x = np.exp(2 * proc.zeta(z, t))
    cf = sde.exp2zeta_closed_form(proc, t)
    assert abs(x.mean() - cf) < 4 * x.std() / math.sqrt(x.size)


def test_tail_index_synthetic():
    rng = np.random.default_rng(0)
    y = rng.normal(size=(400_000, 2))
    u = 1.0 * y[:, 0] ** 2 + 0.3 * y[:, 1] ** 2
    a, se = sde.quadratic_tail_index(u)
    assert abs(a - 0.5) < 4 * se + 0.02


def test_beyond_lifetime_rejected():
    ens = PathEnsemble(16, 16, seed=0)
    T = sde.life_time(1.5, 16)
    with pytest.raises(sde.BeyondLifetimeError):
        sde.solve_paths(make_drift("zero"), 1.0, 1.5, 1.1 * T, ens)
    with pytest.raises(ValueError):
        sde.solve_paths(make_drift("zero"), 1.0, 1.0, 0.1, ens)


def test_zero_drift_solution_is_wick_exponential():
    # b = 0 gives U = x0 exp(zeta)
    K, p = 32, 1.5
    ens = PathEnsemble(64, K, seed=1)
    t = 0.3
    paths = sde.solve_paths(make_drift("zero"), 2.0, p, t, ens, t_out=[0.0, t])
    zeta = sde.QwnProcess(K, p).zeta(ens.all(), t)
    assert np.allclose(paths.U[-1], 2.0 * np.exp(zeta), rtol=1e-8)
    assert paths.gronwall_violations == 0


@pytest.mark.parametrize("drift", ["zero", "id", "tanh:2"])
def test_integral_identity_small(drift):
    K, p = 32, 1.5
    t = 0.5 * sde.life_time(p, K)
    f = fixture_testfunction(5, K)
    r = sde.verify_integral_identity(make_drift(drift), 1.0, p, t, f, PathEnsemble(4000, K, seed=3))
    assert r.pathwise_pass
    assert r.expectation_pass
    assert r.gronwall_violations == 0


def test_rk4_convergence_order():
    K, p = 16, 1.5
    t = 0.5 * sde.life_time(p, K)
    out = sde.rk4_convergence(make_drift("tanh:2"), 1.0, p, t, None, PathEnsemble(32, K, seed=0),
                              hs=(0.04, 0.02, 0.01))
    assert min(out["orders"]) > 3.5


def test_linear_closed_form_vs_mc():
    K, p = 32, 1.5
    t = 0.5 * sde.life_time(p, K)
    f = fixture_testfunction(7, K)
    cf = sde.closed_form_linear(1.0, p, t, f, K).real
    mc = sde.s_transform_solution(make_drift("id"), 1.0, p, t, f, PathEnsemble(20_000, K, seed=6))
    assert abs(mc.value - cf) <= 3 * mc.stderr


def test_positivity():
    K, p = 32, 1.5
    fs = [fixture_testfunction(j, K) for j in range(6)]
    r = sde.positivity_certificate(1.0, p, 0.2, fs, K)
    assert r.min_eig >= -1e-8 * r.norm
    assert r.hermitian_gap < 1e-12
    with pytest.raises(ValueError):
        sde.positivity_certificate(-1.0, p, 0.2, fs, K)
    with pytest.raises(ValueError):
        sde.positivity_certificate(1.0, p, 0.2, fs * 3, K)


def test_adaptedness_negative_control():
    K, p = 32, 1.5
    t = 0.5 * sde.life_time(p, K)
    ens = PathEnsemble(8000, K, seed=2)
    f = fixture_testfunction(3, K)
    inside = TestFunction.from_bump(0.0, t, 3.0, K)
    r = sde.adaptedness_check(make_drift("id"), 1.0, p, t, f, inside, ens)
    assert r.exceeds_noise
