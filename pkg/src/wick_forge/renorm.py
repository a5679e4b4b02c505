"""Renormalization on the first chaos through the heat semigroup.

For X = I_1(h) and sigma^2 = |A^-p h|^2, phi~_p(X) equals the Wick series
sum_n d_n X^{<>n} with d_n = (P_{sigma^2} phi)^{(n)}(0) / n!.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import SpectralBasis
from .chaos import (
    D_MAX,
    ChaosExpansion,
    Projection,
    hermite_projection,
    norm,
    phi_tilde,
    wick,
)


class QuadratureMismatch(RuntimeError):
    pass


@dataclass
class HeatCoeffs:
    t: float
    d: np.ndarray
    order: int
    kuo_series: float  # sum_n t^n n! d_n^2
    kuo_moment: float  # E[phi(X(t))^2] by an independent rule

    @property
    def kuo_residual(self) -> float:
        return abs(self.kuo_series - self.kuo_moment)

    def to_dict(self) -> dict:
        return {"t": self.t, "d": [float(v) for v in self.d], "order": self.order,
                "kuo_series": self.kuo_series, "kuo_moment": self.kuo_moment,
                "kuo_residual": self.kuo_residual}


def heat_semigroup_coeffs(phi, t: float, D: int, order: int | None = None,
                          tol: float | None = None) -> HeatCoeffs:
    """d_n = t^{-n/2} E[phi(sqrt(t) G) He_n(G)] / n! for n <= D.

    Gauss-Hermite order defaults to 4D + 20.  The second moment is recomputed
    with twice that order; a residual above tol raises QuadratureMismatch.
    """
    if t <= 0:
        raise ValueError("heat semigroup variance must be positive")
    fn = getattr(phi, "f", phi)
    order = order if order is not None else 4 * D + 20
    if order < 4 * D:
        raise ValueError(f"Gauss-Hermite order {order} below 4*D = {4 * D}")
    sig = math.sqrt(t)
    a = hermite_projection(fn, 0.0, sig, D, order)
    d = a * sig ** -np.arange(D + 1, dtype=float)
    series = float(sum(t**n * math.factorial(n) * d[n] ** 2 for n in range(D + 1)))
    x, w = np.polynomial.hermite_e.hermegauss(2 * order)
    moment = float(w @ np.asarray(fn(sig * x), dtype=float) ** 2) / math.sqrt(2 * math.pi)
    out = HeatCoeffs(t, d, order, series, moment)
    if tol is not None and out.kuo_residual > tol:
        raise QuadratureMismatch(
            f"second-moment residual {out.kuo_residual:.3g} > {tol:g}; raise the degree or the quadrature order")
    return out


def wick_compose(coeffs, h) -> ChaosExpansion:
    """sum_n d_n I_1(h)^{<>n}, Wick powers by repeated wick products."""
    d = coeffs.d if isinstance(coeffs, HeatCoeffs) else np.asarray(coeffs, dtype=float)
    h = np.asarray(h, dtype=float)
    K = h.size
    if d.size - 1 > D_MAX:
        raise ValueError(f"degree {d.size - 1} exceeds D_max={D_MAX}")
    X = ChaosExpansion.first_chaos(h)
    power = ChaosExpansion.constant(1.0, K)
    out = ChaosExpansion.constant(float(d[0]), K)
    for n in range(1, d.size):
        power = wick(power, X)
        if d[n] != 0.0:
            out = out + power * float(d[n])
    return out


def smoothed_variance(h, p: float) -> float:
    h = np.asarray(h, dtype=float)
    return float(np.sum((SpectralBasis(h.size).power(-p) * h) ** 2))


@dataclass
class PropositionReport:
    p: float
    variance: float
    discrepancy: float
    scale: float
    tol: float = 1e-8

    @property
    def passed(self) -> bool:
        return self.discrepancy < self.tol

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["pass"] = self.passed
        return d


def proposition_check(phi, h, p: float, D: int = 10, order: int | None = None,
                      tol: float = 1e-8) -> PropositionReport:
    """phi~_p(I_1(h)) by the Gaussian projection path against (P_{sigma^2} phi)^<>(I_1(h))."""
    h = np.asarray(h, dtype=float)
    var = smoothed_variance(h, p)
    if var <= 0:
        raise ValueError("h must be nonzero")
    order = order if order is not None else 4 * D + 20
    lhs = phi_tilde(phi, ChaosExpansion.first_chaos(h), p, Projection(D, order, "exact"))
    rhs = wick_compose(heat_semigroup_coeffs(phi, var, D, order), h)
    return PropositionReport(p, var, lhs.max_abs_diff(rhs), max(lhs.scale(), rhs.scale()), tol)


@dataclass
class ErrorBoundReport:
    p: float
    lhs: float
    rhs: float  # bound with the constant at tau = |h|^2
    h_sq: float
    smoothed_sq: float
    sweep_tau: list
    sweep_rhs: list
    atol: float = 1e-12

    @property
    def vacuous(self) -> bool:
        return self.h_sq - self.smoothed_sq <= 0.0

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + self.atol

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.update(vacuous=self.vacuous, **{"pass": self.passed})
        return d


def bound_constant(smoothed_sq: float, tau: float) -> float:
    """C(tau) = (sum_n (sigma^2/tau)^n)^1/2 = (1 - sigma^2/tau)^-1/2."""
    return 1.0 / math.sqrt(1.0 - smoothed_sq / tau)


def error_bound_check(phi, h, p: float, D: int = 12, sup_d2: float | None = None,
                      n_sweep: int = 9) -> ErrorBoundReport:
    """||phi(I_1(h)) - phi~_p(I_1(h))||_{-p} against C sup|phi''| (|h|^2 - |A^-p h|^2)/2.

    The inequality holds for some tau in (|A^-p h|^2, |h|^2); C(tau) is
    smallest at tau = |h|^2, which gives the strictest form checked here.
    """
    h = np.asarray(h, dtype=float)
    s2 = sup_d2 if sup_d2 is not None else getattr(phi, "sup_d2", math.inf)
    if not math.isfinite(s2):
        raise ValueError("error bound needs a finite sup |phi''|")
    X = ChaosExpansion.first_chaos(h)
    proj = Projection(D, 4 * D + 20, "exact")
    plain = phi_tilde(phi, X, 0.0, proj)
    smooth = phi_tilde(phi, X, p, proj)
    lhs = norm(plain - smooth, -p)
    H2 = float(h @ h)
    S2 = smoothed_variance(h, p)
    gap = max(H2 - S2, 0.0)
    if gap == 0.0:
        return ErrorBoundReport(p, lhs, 0.0, H2, S2, [], [])
    rhs = bound_constant(S2, H2) * s2 * gap / 2.0
    taus = list(np.linspace(S2, H2, n_sweep + 1)[1:])
    sweep = [bound_constant(S2, tau) * s2 * gap / 2.0 for tau in taus]
    return ErrorBoundReport(p, lhs, rhs, H2, S2, [float(v) for v in taus], sweep)
