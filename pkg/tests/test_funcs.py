import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wick_forge.funcs import make_drift, make_phi

PHIS = ["cos", "sin", "cos:2.5", "identity", "square", "poly:0.3,2.0,-1.0,0.5"]


@pytest.mark.parametrize("spec", PHIS)
@settings(max_examples=20, deadline=None)
@given(x=st.floats(-3, 3))
def test_derivatives_by_central_differences(spec, x):
    phi = make_phi(spec)
    h = 1e-5
    for n in range(3):
        f, df = phi.derivative(n), phi.derivative(n + 1)
        fd = (f(np.array(x + h)) - f(np.array(x - h))) / (2 * h)
        assert fd == pytest.approx(df(np.array(x)), abs=1e-6 * (1 + abs(x)) ** 3)


def test_sup_second_derivative():
    assert make_phi("cos:3").sup_d2 == 9.0
    assert make_phi("poly:1,2,3").sup_d2 == 6.0
    assert make_phi("poly:1,2,3,4").sup_d2 == np.inf


def test_unknown_names():
    with pytest.raises(ValueError):
        make_phi("tan")
    with pytest.raises(ValueError):
        make_drift("relu")


@pytest.mark.parametrize("spec", ["zero", "id", "linear:-2", "tanh:2", "sin:0.5"])
def test_drift_lipschitz(spec):
    assert make_drift(spec).spot_check() <= 1.0 + 1e-12


def test_linear_rate():
    assert make_drift("id").linear_rate == 1.0
    assert make_drift("tanh:2").linear_rate is None
