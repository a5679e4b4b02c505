import math

import numpy as np
import pytest

from wick_forge.integrate import IntegrationError, integrate, rk4, rk45


def decay(t, y):
    return -y


def oscillator(t, y):
    return np.array([y[1], -y[0]])


def test_rk4_order_four():
    errs = []
    for h in (0.1, 0.05, 0.025):
        sol = rk4(decay, 1.0, [0.0, 1.0], h)
        errs.append(abs(sol.y[-1] - math.exp(-1)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 3.8)


def test_rk4_lands_on_output_times():
    sol = rk4(lambda t, y: np.ones_like(y), np.zeros(2), [0.0, 0.013, 0.5], 0.1)
    assert np.allclose(sol.y[:, 0], [0.0, 0.013, 0.5], atol=1e-15)


def test_rk45_accuracy_and_outputs():
    ts = np.linspace(0.0, 10.0, 11)
    sol = rk45(oscillator, [1.0, 0.0], ts, rtol=1e-10, atol=1e-12)
    assert np.max(np.abs(sol.y[:, 0] - np.cos(ts))) < 1e-8
    assert sol.steps > 0


def test_rk45_vectorized_states():
    y0 = np.linspace(0.5, 2.0, 6)
    sol = rk45(lambda t, y: -t * y, y0, [0.0, 1.5], rtol=1e-10)
    assert np.allclose(sol.y[-1], y0 * math.exp(-1.125), rtol=1e-9)


def test_rk45_control_rows():
    # second row has a kink; controlling on the smooth row only still integrates it
    def rhs(t, y):
        return np.array([-y[0], abs(t - 0.5)])
    full = rk45(rhs, [1.0, 0.0], [0.0, 1.0], rtol=1e-10)
    ctrl = rk45(rhs, [1.0, 0.0], [0.0, 1.0], rtol=1e-10, control=slice(0, 1))
    assert ctrl.y[-1, 0] == pytest.approx(math.exp(-1), rel=1e-9)
    # uncontrolled rows only inherit the step sequence, so the kink costs accuracy
    assert ctrl.y[-1, 1] == pytest.approx(0.25, abs=1e-4)
    assert full.y[-1, 1] == pytest.approx(0.25, abs=1e-8)
    assert ctrl.rejected <= full.rejected


def test_blowup_raises():
    with pytest.raises(IntegrationError):
        rk45(lambda t, y: y**2, 1.0, [0.0, 2.0])


def test_unknown_method():
    with pytest.raises(ValueError):
        integrate(decay, 1.0, [0, 1], method="euler")
