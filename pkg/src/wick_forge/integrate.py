"""Explicit Runge-Kutta integrators for batches of independent scalar ODEs.

The state is an array whose trailing axis runs over samples; all samples share
one step sequence.  Adaptive control uses the max norm over every component,
so the step is set by the hardest sample in the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class IntegrationError(RuntimeError):
    pass


@dataclass
class Solution:
    t: np.ndarray
    y: np.ndarray  # (len(t),) + y0.shape
    steps: int
    rejected: int


def rk4(rhs, y0, t_out, h: float = 1e-3) -> Solution:
    """Classical RK4 with step <= h, landing exactly on every output time."""
    t_out = np.asarray(t_out, dtype=float)
    y = np.array(y0, dtype=float)
    out = np.empty((t_out.size,) + y.shape)
    out[0] = y
    t = t_out[0]
    steps = 0
    for i in range(1, t_out.size):
        span = t_out[i] - t
        n = max(1, int(np.ceil(span / h - 1e-9)))
        dt = span / n
        for _ in range(n):
            k1 = rhs(t, y)
            k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
            k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
            k4 = rhs(t + dt, y + dt * k3)
            y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += dt
            steps += 1
        t = t_out[i]
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"non-finite state at t={t}")
        out[i] = y
    return Solution(t_out, out, steps, 0)


# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def rk45(rhs, y0, t_out, rtol: float = 1e-8, atol: float = 1e-12,
         h0: float | None = None, max_steps: int = 200_000, control=None) -> Solution:
    """Dormand-Prince 5(4) with FSAL, propagating the 5th-order solution.

    control selects the leading-axis rows used for step control (default all);
    rows left out ride along on the step sequence of the others.
    """
    t_out = np.asarray(t_out, dtype=float)
    y = np.array(y0, dtype=float)
    out = np.empty((t_out.size,) + y.shape)
    out[0] = y
    t = t_out[0]
    span = t_out[-1] - t
    h = h0 if h0 is not None else min(1e-3, span) if span > 0 else 0.0
    k = [None] * 7
    k[0] = rhs(t, y)
    steps = rejected = 0
    for i in range(1, t_out.size):
        target = t_out[i]
        while t < target:
            if steps + rejected > max_steps:
                raise IntegrationError(f"step budget exhausted at t={t}")
            last = h >= target - t
            dt = target - t if last else h
            for s in range(1, 7):
                acc = y + dt * sum(a * k[j] for j, a in enumerate(_A[s]) if a)
                k[s] = rhs(t + _C[s] * dt, acc)
            y_new = acc  # stage 7 point is the 5th-order solution
            err = dt * sum(e * k[j] for j, e in enumerate(_E) if e)
            if control is not None:
                err, ya, yb = err[control], y[control], y_new[control]
            else:
                ya, yb = y, y_new
            scale = atol + rtol * np.maximum(np.abs(ya), np.abs(yb))
            en = float(np.max(np.abs(err) / scale))
            if not np.isfinite(en):
                raise IntegrationError(f"non-finite error estimate at t={t}")
            if en <= 1.0:
                t = target if last else t + dt
                y = y_new
                k[0] = k[6]
                steps += 1
                fac = 5.0 if en == 0 else min(5.0, 0.9 * en ** -0.2)
                h = max(h, dt) * fac if last else dt * fac
            else:
                rejected += 1
                h = dt * max(0.2, 0.9 * en ** -0.2)
            if h < 1e-14 * max(1.0, abs(t)):
                raise IntegrationError(f"step size underflow at t={t}")
        out[i] = y
    return Solution(t_out, out, steps, rejected)


def integrate(rhs, y0, t_out, method: str = "rk45", **kw) -> Solution:
    if method == "rk4":
        return rk4(rhs, y0, t_out, **{k: v for k, v in kw.items() if k == "h"})
    if method == "rk45":
        return rk45(rhs, y0, t_out, **{k: v for k, v in kw.items() if k != "h"})
    raise ValueError(f"unknown integrator {method!r}")
