"""Quadratic white noise: W_t, its Wick square, X_t and the Ito-type formulas.

In the truncated model Z_k = I_1(xi_k), so W_t = sum_k xi_k(t) Z_k and
X_t = int_0^t W_s^{<>2} ds = z^T G(t) z - tr G(t).  The smoothed noise
W_s^p = Gamma(A^-p) W_s has coordinates d(s) = Lambda^-p xi(s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import (
    GramCache,
    SpectralBasis,
    gram_matrix,
    laguerre_functions,
    spectral_tail,
)
from .chaos import ChaosExpansion, TestFunction, norm, star_p, wick
from .ensemble import PathEnsemble, merge_moments


@dataclass
class QwnProcess:
    """Gram-matrix backed view of the smoothed noise at exponent p."""

    K: int
    p: float
    cache: GramCache | None = None
    _memo: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.basis = SpectralBasis(self.K)
        self.lam_p = self.basis.power(self.p)
        self.lam_mp = self.basis.power(-self.p)

    def G(self, t: float) -> np.ndarray:
        if self.cache is not None:
            return self.cache.matrix(t)
        t = float(t)
        if t not in self._memo:
            self._memo[t] = gram_matrix(self.K, t)
        return self._memo[t]

    def M(self, t: float) -> np.ndarray:
        """M_p(t) = Lambda^-p G(t) Lambda^-p (the smoothed Gram matrix)."""
        return self.lam_mp[:, None] * self.G(t) * self.lam_mp[None, :]

    def delta(self, s) -> np.ndarray:
        """Coordinates of delta_s^p, shape (K,) + shape(s)."""
        xi = laguerre_functions(self.K, s)
        return xi * self.lam_mp.reshape((-1,) + (1,) * (xi.ndim - 1))

    def shift(self, f: TestFunction | None) -> np.ndarray:
        """Coordinate translation Lambda^p f realizing W^p -> W^p + f."""
        if f is None:
            return np.zeros(self.K)
        return self.lam_p * f.resized(self.K).coeffs

    def zeta(self, z: np.ndarray, t: float, f: TestFunction | None = None) -> np.ndarray:
        """zeta_t = (z+c)^T M_p(t) (z+c) - tr M_p(t), c the translation."""
        zc = z + self.shift(f)
        M = self.M(t)
        return np.einsum("ij,jk,ik->i", zc, M, zc) - np.trace(M)


def white_noise(t: float, K: int) -> ChaosExpansion:
    return ChaosExpansion.first_chaos(laguerre_functions(K, t))


def wick_square_wn(t: float, K: int) -> ChaosExpansion:
    W = white_noise(t, K)
    return wick(W, W)


def x_process(t: float, K: int, G: np.ndarray | None = None) -> ChaosExpansion:
    """X_t as a second-chaos element with matrix G(t)."""
    if t == 0:
        return ChaosExpansion.constant(0.0, K)
    return ChaosExpansion.second_chaos(gram_matrix(K, t) if G is None else G)


# ---------------------------------------------------------------------------
# x^2 identity


@dataclass
class ItoSquareReport:
    t: float
    p: float
    K: int
    discrepancy: float
    scale: float
    constant: float
    constant_quad: float
    star_gap: float  # ||X*_pX - X<>X||_{-2} / ||X<>X||_{-2}
    tol: float = 1e-8

    @property
    def passed(self) -> bool:
        return self.discrepancy <= self.tol

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["pass"] = self.passed
        return d


def ito_square_rhs(t: float, p: float, K: int, G: np.ndarray | None = None) -> ChaosExpansion:
    """Constant 2 tr(Gh^2) plus I_2(4 Lambda^p Gh^2 Lambda^p), Gh = Lambda^-p G Lambda^-p."""
    proc = QwnProcess(K, p)
    G = gram_matrix(K, t) if G is None else G
    Gh = proc.lam_mp[:, None] * G * proc.lam_mp[None, :]
    G2 = Gh @ Gh
    B = 4.0 * proc.lam_p[:, None] * G2 * proc.lam_p[None, :]
    return ChaosExpansion.constant(2.0 * np.trace(G2), K) + ChaosExpansion.second_chaos(B)


def kernel_square_integral(t: float, p: float, K: int, panels: int = 8, order: int = 24) -> float:
    """4 int_0^t int_0^s K_p(r,s)^2 dr ds by tensor Gauss-Legendre on [0,t]^2 (halved)."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, t, panels + 1)
    h = np.diff(edges)
    s = (edges[:-1, None] + 0.5 * h[:, None] * (x + 1)).ravel()
    ws = (0.5 * h[:, None] * w).ravel()
    D = laguerre_functions(K, s) * SpectralBasis(K).power(-p)[:, None]
    Kp = D.T @ D
    return 2.0 * float(ws @ (Kp**2) @ ws)


def ito_square_check(t: float, p: float, K: int = 32, G: np.ndarray | None = None,
                     tol: float = 1e-8) -> ItoSquareReport:
    G = gram_matrix(K, t) if G is None else G
    X = x_process(t, K, G)
    w2 = wick(X, X)
    lhs = star_p(X, X, p) - w2
    rhs = ito_square_rhs(t, p, K, G)
    gap = norm(lhs, -2.0) / norm(w2, -2.0)
    return ItoSquareReport(
        t=t, p=p, K=K,
        discrepancy=lhs.max_abs_diff(rhs),
        scale=rhs.scale(),
        constant=rhs.coefficient(()),
        constant_quad=kernel_square_integral(t, p, K),
        star_gap=float(gap),
        tol=tol,
    )


def star_decay(t: float = 0.1, K: int = 32, ps=(0, 1, 2, 4, 8), q: float = -2.0,
               G: np.ndarray | None = None) -> list[tuple[float, float]]:
    """Normalized distance ||X*_pX - X<>X||_q / ||X<>X||_q for each p."""
    G = gram_matrix(K, t) if G is None else G
    X = x_process(t, K, G)
    w2 = wick(X, X)
    base = norm(w2, q)
    return [(float(p), norm(star_p(X, X, p) - w2, q) / base) for p in ps]


# ---------------------------------------------------------------------------
# norm-integral bound


def _gl_nodes(t: float, panels: int, order: int = 8):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, t, panels + 1)
    h = np.diff(edges)
    s = (edges[:-1, None] + 0.5 * h[:, None] * (x + 1)).ravel()
    ws = (0.5 * h[:, None] * w).ravel()
    return s, ws


def norm_integral_bound(t: float, p: float, K: int = 64, panels: int | None = None) -> dict:
    """int_0^t ||W_s^{<>2}||_{-p} ds against sqrt2 * sum_k lambda_k^{-2p}.

    The left side is integrated from chaos-algebra norms at Gauss-Legendre
    nodes and cross-checked against sqrt2 tr M_p(t).
    """
    panels = panels or max(4, int(math.ceil(t / 0.25)))
    s, ws = _gl_nodes(t, panels, 16)
    vals = np.array([norm(wick_square_wn(si, K), -p) for si in s])
    lhs = float(ws @ vals)
    proc = QwnProcess(K, p)
    trace_form = math.sqrt(2.0) * float(np.trace(proc.M(t)))
    series = float(np.sum(SpectralBasis(K).power(-2 * p)))
    tail, _ = spectral_tail(K, p)
    return {
        "t": t, "p": p, "K": K,
        "lhs": lhs,
        "lhs_trace_form": trace_form,
        "rhs_truncated": math.sqrt(2.0) * series,
        "rhs_with_tail": math.sqrt(2.0) * (series + tail),
        "pass": lhs <= math.sqrt(2.0) * series * (1 + 1e-12),
    }


# ---------------------------------------------------------------------------
# general Ito formula under the S-transform


@dataclass
class ItoFormulaReport:
    lhs: float
    rhs: float
    diff: float
    mc_stderr: float
    quad_bound: float
    form_gap: float  # max over nodes of |E[A_direct] - E[A_ibp]| / its stderr
    fd_times: list
    fd_values: list
    abc_values: list
    fd_sigma: list
    variant: str = "phi2"

    @property
    def passed(self) -> bool:
        return abs(self.diff) <= 3.0 * (self.mc_stderr + self.quad_bound)

    @property
    def fd_passed(self) -> bool:
        return all(abs(a - b) <= 3.0 * s for a, b, s in zip(self.fd_values, self.abc_values, self.fd_sigma))

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["pass"] = self.passed
        d["fd_pass"] = self.fd_passed
        return d


def _node_terms(phi, proc: QwnProcess, z: np.ndarray, c: np.ndarray, f: TestFunction | None,
                s: float, variant: str = "phi2") -> dict:
    """Per-sample integrand pieces at time s.

    Direct form: phi'(Y)(W^2-|d|^2), 2 phi'(Y) W f, phi'(Y) f^2.
    Integration-by-parts form: A = phi'''(Y)(DY)^2 + phi''(Y) D^2Y,
    B = 2 f phi''(Y) DY, with DY = 2 (z+c)^T M d and D^2Y = 2 d^T M d.
    variant 'phi3' replaces phi'' by phi''' in B (kept as a negative control).
    """
    M = proc.M(s)
    d = proc.delta(s)
    zc = z + c
    Mz = zc @ M
    Y = np.einsum("ij,ij->i", Mz, zc) - np.trace(M)
    W = z @ d
    fs = float(f(s)) if f is not None else 0.0
    p1, p2, p3 = phi.d1(Y), phi.d2(Y), phi.d3(Y)
    DY = 2.0 * (Mz @ d)
    D2Y = 2.0 * float(d @ M @ d)
    a_ibp = p3 * DY**2 + p2 * D2Y
    b_ibp = 2.0 * fs * (p3 if variant == "phi3" else p2) * DY
    cc = p1 * fs * fs
    a_dir = p1 * (W * W - d @ d)
    return {"Y": Y, "a_ibp": a_ibp, "b_ibp": b_ibp, "c": cc, "a_dir": a_dir,
            "b_dir": 2.0 * p1 * W * fs}


def ito_formula_check(phi, p: float, t: float, f: TestFunction | None, ensemble: PathEnsemble,
                      panels: int = 4, order: int = 8, fd_points: int = 5,
                      fd_h: float | None = None, variant: str = "phi2",
                      cache: GramCache | None = None) -> ItoFormulaReport:
    """Monte Carlo check of the Ito-type formula for phi(Y_t) at the test function f.

    Uses one ensemble for every time node (common random numbers).  The
    quadrature bound is the change in the right side under panel doubling.
    """
    if p <= 1:
        raise ValueError("the Ito formula check needs p > 1")
    K = ensemble.K
    proc = QwnProcess(K, p, cache)
    c = proc.shift(f)
    s1, w1 = _gl_nodes(t, panels, order)
    s2, w2 = _gl_nodes(t, 2 * panels, order)
    h = fd_h if fd_h is not None else t / 40.0
    fd_ts = np.linspace(0.0, t, fd_points + 2)[1:-1]
    phi0 = float(phi.f(np.array([0.0]))[0])

    def chunk(z, a, b):
        # columns: lhs-rhs (coarse), rhs fine - rhs coarse, a_dir - a_ibp per coarse node,
        # then per fd time: fd estimate minus abc integrand
        n = z.shape[0]
        Yt = proc.zeta(z, t, f)
        rhs1 = np.full(n, phi0)
        gaps = []
        for s, w in zip(s1, w1):
            q = _node_terms(phi, proc, z, c, f, s, variant)
            rhs1 += w * (q["a_ibp"] + q["b_ibp"] + q["c"])
            gaps.append(q["a_dir"] - q["a_ibp"])
        rhs2 = np.full(n, phi0)
        for s, w in zip(s2, w2):
            q = _node_terms(phi, proc, z, c, f, s, variant)
            rhs2 += w * (q["a_ibp"] + q["b_ibp"] + q["c"])
        lhs = phi.f(Yt)
        fd_cols, abc_cols, fd_raw = [], [], []
        for s in fd_ts:
            fv = {}
            for k in (-2, -1, 1, 2):
                fv[k] = phi.f(proc.zeta(z, s + k * h / 2, f))
            d_h = (fv[2] - fv[-2]) / (2 * h)
            d_h2 = (fv[1] - fv[-1]) / h
            fd = (4 * d_h2 - d_h) / 3.0  # Richardson
            q = _node_terms(phi, proc, z, c, f, s, variant)
            abc = q["a_ibp"] + q["b_ibp"] + q["c"]
            fd_cols.append(fd - abc)
            abc_cols.append(abc)
            fd_raw.append(fd)
        cols = [lhs - rhs1, rhs2 - rhs1, lhs, rhs2] + gaps + fd_cols + abc_cols + fd_raw
        return _moments_cols(np.stack(cols, axis=1))

    parts = ensemble.map(chunk)
    mean, se = merge_moments(parts)
    ng, nf = len(s1), len(fd_ts)
    gaps_m = mean[4:4 + ng]
    gaps_s = se[4:4 + ng]
    off = 4 + ng
    fd_diff_s = se[off:off + nf]
    abc_m = mean[off + nf:off + 2 * nf]
    fd_m = mean[off + 2 * nf:off + 3 * nf]
    form_gap = float(np.max(np.abs(gaps_m) / np.maximum(gaps_s, 1e-300)))
    return ItoFormulaReport(
        lhs=float(mean[2]),
        rhs=float(mean[3]),
        diff=float(mean[0] + mean[1]),
        mc_stderr=float(se[0]),
        quad_bound=float(abs(mean[1])),
        form_gap=form_gap,
        fd_times=[float(v) for v in fd_ts],
        fd_values=[float(v) for v in fd_m],
        abc_values=[float(v) for v in abc_m],
        fd_sigma=[float(v) for v in fd_diff_s],
        variant=variant,
    )


def _moments_cols(x: np.ndarray):
    m = x.mean(axis=0)
    return x.shape[0], m, ((x - m) ** 2).sum(axis=0)
