"""The renormalized linear-noise SDE dY = b~_p(Y) dt + Y *_p W_t^{<>2} dt.

The solution is built as Y_t = Gamma(A^p)(V_t e^{zeta_t}), where per sample

    dzeta/ds = (W_s^p + f(s))^2 - |delta_s^p|^2,     zeta_0 = 0
    dV/ds    = b(V e^zeta) e^-zeta,                   V_0 = x

and f is the S-transform argument (a translation z -> z + Lambda^p f of the
Gaussian coordinates).  zeta is integrated as an ODE state from its exact
derivative; its closed form z^T M_p z - tr M_p serves as a cross-check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import erfcx

from .basis import GramCache, sup_delta_norm
from .chaos import TestFunction
from .ensemble import PathEnsemble, mean_stderr, merge_moments
from .funcs import Drift
from .integrate import integrate
from .qwn import QwnProcess, _gl_nodes


class BeyondLifetimeError(ValueError):
    pass


# state rows of the V-system
V_, ZETA, TAU, HD, ED, HP, EP = range(7)


def life_time(p: float, K: int = 64) -> float:
    """T = (4 sup_r |delta_r^p|^2)^-1 with the truncated sup plus its tail."""
    return 1.0 / (4.0 * sup_delta_norm(p, K).total)


class _VSystem:
    """V, zeta and the two Gronwall envelopes (proof form and pathwise form).

    tau = tr M_p(s) so that e^-zeta <= e^tau; H* = int e^{tau or -zeta};
    h = |x| + C H*; E* solves E' = h + C E, giving |V| <= h + C E.
    """

    def __init__(self, drift: Drift, proc: QwnProcess, zc: np.ndarray, x0: float):
        self.b, self.C = drift.b, drift.C
        self.proc, self.zc, self.ax = proc, zc, abs(x0)

    def __call__(self, s, y):
        d = self.proc.delta(s)
        w = self.zc @ d
        dd = float(d @ d)
        V, zeta, tau, Hd, Ed, Hp, Ep = y
        em = np.exp(-zeta)
        out = np.empty_like(y)
        out[V_] = self.b(V / em) * em
        out[ZETA] = w * w - dd
        out[TAU] = dd
        out[HD] = np.exp(tau)
        out[ED] = self.ax + self.C * Hd + self.C * Ed
        out[HP] = em
        out[EP] = self.ax + self.C * Hp + self.C * Ep
        return out


class _ZSystem:
    """dZ/ds = b(Z) + Z ((W^p+f)^2 - |delta^p|^2), the unsmoothed equation."""

    def __init__(self, drift: Drift, proc: QwnProcess, zc: np.ndarray):
        self.b, self.proc, self.zc = drift.b, proc, zc

    def __call__(self, s, y):
        d = self.proc.delta(s)
        w = self.zc @ d
        return self.b(y) + y * (w * w - float(d @ d))


class _PairSystem:
    """Two translated V-systems sharing samples plus the leakage bound B.

    With U = V e^zeta and e = U2 - U1, |e|' <= (C + q2)|e| + |U1||q2 - q1|,
    so B' = (C + q2) B + |U1||q2 - q1|, B(0) = 0 dominates |e| pathwise.
    """

    def __init__(self, drift: Drift, proc: QwnProcess, zc1, zc2):
        self.b, self.C, self.proc = drift.b, drift.C, proc
        self.zc1, self.zc2 = zc1, zc2

    def __call__(self, s, y):
        d = self.proc.delta(s)
        dd = float(d @ d)
        w1, w2 = self.zc1 @ d, self.zc2 @ d
        q1, q2 = w1 * w1 - dd, w2 * w2 - dd
        V1, z1, V2, z2, B = y
        out = np.empty_like(y)
        e1, e2 = np.exp(-z1), np.exp(-z2)
        out[0] = self.b(V1 / e1) * e1
        out[1] = q1
        out[2] = self.b(V2 / e2) * e2
        out[3] = q2
        out[4] = (self.C + q2) * B + np.abs(V1 / e1) * np.abs(q2 - q1)
        return out


@dataclass
class SolverConfig:
    method: str = "rk45"
    rtol: float = 1e-8
    atol: float = 1e-12
    h: float = 1e-3

    def kwargs(self) -> dict:
        if self.method == "rk4":
            return {"h": self.h}
        return {"rtol": self.rtol, "atol": self.atol}


@dataclass
class SdePaths:
    times: np.ndarray
    V: np.ndarray  # (len(times), N)
    zeta: np.ndarray
    envelope: np.ndarray  # proof-form Gronwall bound
    envelope_path: np.ndarray  # pathwise (tighter) bound
    steps: int
    z: np.ndarray | None = None

    @property
    def U(self) -> np.ndarray:
        return self.V * np.exp(self.zeta)

    @property
    def gronwall_violations(self) -> int:
        slack = 1e-9 * np.maximum(1.0, self.envelope)
        return int(np.sum(np.abs(self.V) > self.envelope + slack))

    @property
    def gronwall_path_violations(self) -> int:
        slack = 1e-9 * np.maximum(1.0, self.envelope_path)
        return int(np.sum(np.abs(self.V) > self.envelope_path + slack))


def _check_time(p: float, t: float, K: int, allow_beyond_T: bool, allow_small_p: bool = False):
    if p <= 1 and not allow_small_p:
        raise ValueError("p must exceed 1 (pass allow_small_p to override)")
    T = life_time(p, K)
    if t >= T:
        if not allow_beyond_T:
            raise BeyondLifetimeError(f"t={t} is not below the life time T={T:.6g}")
        warnings.warn(f"t={t} beyond the life time T={T:.6g}", RuntimeWarning, stacklevel=3)
    return T


def _solve_v(drift, proc, x0, zc, t_out, cfg: SolverConfig):
    n = zc.shape[0]
    y0 = np.zeros((7, n))
    y0[V_] = x0
    sol = integrate(_VSystem(drift, proc, zc, x0), y0, t_out, cfg.method, **cfg.kwargs())
    return sol


def _solve_z(drift, proc, x0, zc, t_out, rtol=1e-12, atol=1e-14):
    y0 = np.full(zc.shape[0], float(x0))
    return integrate(_ZSystem(drift, proc, zc), y0, t_out, "rk45", rtol=rtol, atol=atol)


def solve_paths(drift: Drift, x0: float, p: float, t_end: float, ensemble: PathEnsemble,
                f: TestFunction | None = None, config: SolverConfig = SolverConfig(),
                t_out=None, allow_beyond_T: bool = False, keep_z: bool = False,
                cache: GramCache | None = None) -> SdePaths:
    """Integrate V and zeta for every sample on the output grid (default 11 points)."""
    _check_time(p, t_end, ensemble.K, allow_beyond_T)
    proc = QwnProcess(ensemble.K, p, cache)
    c = proc.shift(f)
    t_out = np.linspace(0.0, t_end, 11) if t_out is None else np.asarray(t_out, dtype=float)

    def run(z, a, b):
        sol = _solve_v(drift, proc, x0, z + c, t_out, config)
        return sol, (z if keep_z else None)

    parts = ensemble.map(run)
    ys = np.concatenate([s.y for s, _ in parts], axis=2)
    C = drift.C
    ax = abs(x0)
    env = ax + C * ys[:, HD] + C * ys[:, ED]
    env_p = ax + C * ys[:, HP] + C * ys[:, EP]
    return SdePaths(
        times=t_out,
        V=ys[:, V_],
        zeta=ys[:, ZETA],
        envelope=env,
        envelope_path=env_p,
        steps=sum(s.steps for s, _ in parts),
        z=np.concatenate([z for _, z in parts]) if keep_z else None,
    )


@dataclass
class STransformResult:
    value: float
    stderr: float
    cv: float
    variance_flag: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def s_transform_solution(drift: Drift, x0: float, p: float, t: float, f: TestFunction | None,
                         ensemble: PathEnsemble, config: SolverConfig = SolverConfig(),
                         cv_threshold: float = 50.0, allow_beyond_T: bool = False,
                         cache: GramCache | None = None) -> STransformResult:
    """E[V_t e^{zeta_t}] over translated paths: the S-transform of Y_t at f."""
    if t == 0:
        return STransformResult(float(x0), 0.0, 0.0, False)
    paths = solve_paths(drift, x0, p, t, ensemble, f, config, [0.0, t], allow_beyond_T, cache=cache)
    U = paths.U[-1]
    m, se = mean_stderr(U)
    cv = float(U.std() / abs(m)) if m != 0 else math.inf
    return STransformResult(m, se, cv, cv > cv_threshold)


# ---------------------------------------------------------------------------
# integral identity


@dataclass
class IdentityReport:
    drift: str
    p: float
    t: float
    N: int
    pathwise_max: float
    pathwise_tol: float
    value: float
    stderr: float
    expectation_diff: float
    diff_stderr: float
    quad_bound: float
    zeta_form_gap: float
    gronwall_violations: int

    @property
    def pathwise_pass(self) -> bool:
        return self.pathwise_max <= self.pathwise_tol

    @property
    def expectation_pass(self) -> bool:
        return abs(self.expectation_diff) <= 3.0 * self.stderr

    @property
    def passed(self) -> bool:
        return self.pathwise_pass and self.expectation_pass and self.gronwall_violations == 0

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.update(pathwise_pass=self.pathwise_pass, expectation_pass=self.expectation_pass,
                 **{"pass": self.passed})
        return d


def verify_integral_identity(drift: Drift, x0: float, p: float, t: float, f: TestFunction | None,
                             ensemble: PathEnsemble, config: SolverConfig = SolverConfig(),
                             panels: int = 4, order: int = 8, pathwise_tol: float = 1e-8,
                             cache: GramCache | None = None) -> IdentityReport:
    """Check Y_t = x + int b~(Y) + int Y *_p W^{<>2} under the S-transform at f.

    (a) pathwise: U_t = V_t e^{zeta_t} against an independent tight solve of
        the Z-equation; residual |U - Z| / max(1, |Z|) per sample.
    (b) expectation: E[U_t] - x - sum_s w_s E[b(U_s) + U_s q_s] on
        Gauss-Legendre nodes, with the panel-doubling change as quad bound.
    """
    _check_time(p, t, ensemble.K, False)
    proc = QwnProcess(ensemble.K, p, cache)
    c = proc.shift(f)
    s1, w1 = _gl_nodes(t, panels, order)
    s2, w2 = _gl_nodes(t, 2 * panels, order)
    grid = np.unique(np.concatenate([[0.0], s1, s2, [t]]))
    pos = {float(v): i for i, v in enumerate(grid)}

    def run(z, a, b):
        zc = z + c
        sol = _solve_v(drift, proc, x0, zc, grid, config)
        V, zeta = sol.y[:, V_], sol.y[:, ZETA]
        U = V * np.exp(zeta)
        ref = _solve_z(drift, proc, x0, zc, [0.0, t]).y[-1]
        resid = np.abs(U[-1] - ref) / np.maximum(1.0, np.abs(ref))

        def quad(nodes, weights):
            acc = np.full(z.shape[0], float(x0))
            for s, w in zip(nodes, weights):
                i = pos[float(s)]
                d = proc.delta(s)
                q = (zc @ d) ** 2 - d @ d
                acc += w * (drift.b(U[i]) + U[i] * q)
            return acc

        r1, r2 = quad(s1, w1), quad(s2, w2)
        zform = proc.zeta(z, t, f)
        C = drift.C
        env = abs(x0) + C * sol.y[:, HD] + C * sol.y[:, ED]
        viol = int(np.sum(np.abs(V) > env * (1 + 1e-9) + 1e-12))
        cols = np.stack([U[-1], U[-1] - r2, r2 - r1], axis=1)
        return (cols.shape[0], cols.mean(0), ((cols - cols.mean(0)) ** 2).sum(0)), \
            float(resid.max()), float(np.max(np.abs(zform - zeta[-1]))), viol

    parts = ensemble.map(run)
    mean, se = merge_moments([m for m, *_ in parts])
    return IdentityReport(
        drift=drift.name, p=p, t=t, N=ensemble.N,
        pathwise_max=max(r for _, r, _, _ in parts),
        pathwise_tol=pathwise_tol,
        value=float(mean[0]), stderr=float(se[0]),
        expectation_diff=float(mean[1]), diff_stderr=float(se[1]),
        quad_bound=float(abs(mean[2])),
        zeta_form_gap=max(g for _, _, g, _ in parts),
        gronwall_violations=sum(v for *_, v in parts),
    )


def rk4_convergence(drift: Drift, x0: float, p: float, t: float, f: TestFunction | None,
                    ensemble: PathEnsemble, hs=(0.02, 0.01, 0.005),
                    cache: GramCache | None = None) -> dict:
    """Pathwise RK4 error against a tight Z-equation solve under step halving."""
    proc = QwnProcess(ensemble.K, p, cache)
    zc = ensemble.all() + proc.shift(f)
    ref = _solve_z(drift, proc, x0, zc, [0.0, t]).y[-1]
    errs = []
    for h in hs:
        sol = _solve_v(drift, proc, x0, zc, [0.0, t], SolverConfig("rk4", h=h))
        U = sol.y[-1, V_] * np.exp(sol.y[-1, ZETA])
        errs.append(float(np.max(np.abs(U - ref))))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    return {"h": list(hs), "errors": errs, "orders": orders}


def uniqueness_surrogate(drift: Drift, x0: float, p: float, t_end: float, ensemble: PathEnsemble,
                         f: TestFunction | None = None, n_out: int = 41, h: float = 1e-3,
                         cache: GramCache | None = None) -> dict:
    """Max |V_rk4 - V_rk45| over the output grid and all samples."""
    grid = np.linspace(0.0, t_end, n_out)
    a = solve_paths(drift, x0, p, t_end, ensemble, f, SolverConfig("rk4", h=h), grid, cache=cache)
    b = solve_paths(drift, x0, p, t_end, ensemble, f, SolverConfig("rk45"), grid, cache=cache)
    gap = float(np.max(np.abs(a.V - b.V)))
    return {"max_gap": gap, "gronwall_violations": a.gronwall_violations + b.gronwall_violations,
            "gronwall_path_violations": a.gronwall_path_violations + b.gronwall_path_violations}


# ---------------------------------------------------------------------------
# adaptedness


@dataclass
class AdaptednessReport:
    diff: float
    sigma: float
    leakage: float
    leakage_max: float
    g_norm_inside: float

    @property
    def bound(self) -> float:
        return 3.0 * self.sigma + self.leakage

    @property
    def passed(self) -> bool:
        return abs(self.diff) <= self.bound

    @property
    def exceeds_noise(self) -> bool:
        return abs(self.diff) > 3.0 * self.sigma

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.update(bound=self.bound, exceeds_noise=self.exceeds_noise, **{"pass": self.passed})
        return d


def adaptedness_check(drift: Drift, x0: float, p: float, t: float, f: TestFunction | None,
                      g: TestFunction, ensemble: PathEnsemble,
                      config: SolverConfig = SolverConfig(),
                      cache: GramCache | None = None) -> AdaptednessReport:
    """Paired estimate of S(Y_t)(f+g) - S(Y_t)(f) with the pathwise leakage bound."""
    _check_time(p, t, ensemble.K, False)
    proc = QwnProcess(ensemble.K, p, cache)
    K = ensemble.K
    f = f.resized(K) if f is not None else TestFunction.zero(K)
    g = g.resized(K)
    c1, c2 = proc.shift(f), proc.shift(f + g)

    def run(z, a, b):
        y0 = np.zeros((5, z.shape[0]))
        y0[0] = y0[2] = x0
        kw = config.kwargs()
        if config.method == "rk45":
            kw["control"] = slice(0, 4)  # the bound B has kinks; it follows the smooth states
        sol = integrate(_PairSystem(drift, proc, z + c1, z + c2), y0, [0.0, t], config.method, **kw)
        y = sol.y[-1]
        D = y[2] * np.exp(y[3]) - y[0] * np.exp(y[1])
        cols = np.stack([D, y[4]], axis=1)
        m = cols.mean(0)
        return (cols.shape[0], m, ((cols - m) ** 2).sum(0)), float(y[4].max())

    parts = ensemble.map(run)
    mean, se = merge_moments([m for m, _ in parts])
    s, w = _gl_nodes(t, max(4, int(math.ceil(t / 0.1))), 16)
    g_in = math.sqrt(float(w @ g(s) ** 2))
    return AdaptednessReport(float(mean[0]), float(se[0]), float(mean[1]),
                             max(b for _, b in parts), g_in)


# ---------------------------------------------------------------------------
# life time


@dataclass
class LifetimeReport:
    p: float
    K: int
    T: float
    T_truncated: float
    t_star: float
    lam_max_limit: float

    @property
    def passed(self) -> bool:
        return self.T <= self.t_star

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["pass"] = self.passed
        return d


def lam_max(proc: QwnProcess, t: float) -> float:
    return float(np.linalg.eigvalsh(proc.M(t))[-1])


def lifetime_threshold(p: float, K: int = 64, xtol: float = 1e-9,
                       cache: GramCache | None = None) -> LifetimeReport:
    """Life time T against t* = inf{t : lambda_max(M_p(t)) >= 1/4}.

    lambda_max(M_p(t)) increases to lambda_max(Lambda^-2p) = (3/2)^-2p, so
    t* is infinite once that limit stays below 1/4.
    """
    if p <= 0.5:
        raise ValueError("life time needs p > 1/2")
    sup = sup_delta_norm(p, K)
    T = 1.0 / (4.0 * sup.total)
    limit = 1.5 ** (-2 * p)
    proc = QwnProcess(K, p, cache)
    if limit < 0.25:
        t_star = math.inf
    else:
        hi = max(T, 0.25)
        while lam_max(proc, hi) < 0.25:
            hi *= 2
            if hi > 1e4:
                raise RuntimeError("life-time bracket not found")
        lo = 0.0
        while hi - lo > xtol * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if lam_max(proc, mid) >= 0.25:
                hi = mid
            else:
                lo = mid
        t_star = hi
    return LifetimeReport(p, K, T, 1.0 / (4.0 * sup.value), t_star, limit)


def exp2zeta_closed_form(proc: QwnProcess, t: float) -> float:
    """E[e^{2 zeta_t}] = det(I - 4M)^-1/2 e^{-2 tr M}; inf when it does not exist."""
    M = proc.M(t)
    ev = np.linalg.eigvalsh(np.eye(M.shape[0]) - 4 * M)
    if ev[0] <= 0:
        return math.inf
    return float(np.exp(-0.5 * np.sum(np.log(ev)) - 2 * np.trace(M)))


def quadratic_tail_index(u: np.ndarray, k: int | None = None) -> tuple[float, float]:
    """Tail rate alpha of a Gaussian quadratic form u from its top k samples.

    For u = sum_i mu_i y_i^2 the density decays like u^-1/2 e^{-alpha u} with
    alpha = 1/(2 mu_max), so the exceedances over u0 are fitted by maximum
    likelihood to that truncated gamma(1/2) shape.  Returns (alpha, stderr).
    """
    n = u.size
    k = k or max(50, int(0.03 * n))
    top = np.sort(u)[-(k + 1):]
    u0, x = top[0], top[1:]
    S = float(x.sum())

    # log of int_{u0}^inf u^-1/2 e^{-a u} du = a^-1/2 Gamma(1/2, a u0), via erfcx
    def nll(a):
        return a * (S - k * u0) + k * (-0.5 * math.log(a) + 0.5 * math.log(math.pi)
                                       + math.log(erfcx(math.sqrt(a * u0))))

    a = minimize_scalar(nll, bounds=(1e-4, 1e3), method="bounded", options={"xatol": 1e-10}).x
    h = 1e-4 * a
    info = (nll(a + h) - 2 * nll(a) + nll(a - h)) / h**2
    return float(a), float(1.0 / math.sqrt(info)) if info > 0 else math.inf


@dataclass
class MomentLadder:
    """Sample means of e^{2 zeta_t} over a ladder of N, plus a tail-index fit.

    e^{2 zeta} has tail index alpha = 1/(4 lambda_max(M_p(t))) and infinite
    mean exactly when alpha <= 1.
    """

    t: float
    Ns: list
    medians: list
    spreads: list
    closed_form: float
    tail_index: float
    tail_stderr: float
    exact_index: float

    @property
    def divergent(self) -> bool:
        return self.tail_index + 2.0 * self.tail_stderr < 1.0

    @property
    def bounded(self) -> bool:
        cf = self.closed_form
        return (math.isfinite(cf) and self.tail_index - 2.0 * self.tail_stderr > 1.0
                and abs(self.medians[-1] - cf) <= 3.0 * self.spreads[-1])

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.update(divergent=self.divergent, bounded=self.bounded)
        return d


def moment_ladder(p: float, t: float, K: int = 64, Ns=(1000, 10000, 100000), replicates: int = 4,
                  seed: int = 0, cache: GramCache | None = None) -> MomentLadder:
    """Replicate sample means of e^{2 zeta_t} over growing N.

    spreads are standard errors of the replicate median (1.2533 sigma/sqrt R);
    the tail index is fitted on all replicates at the largest N, pooled.
    """
    proc = QwnProcess(K, p, cache)
    trM = float(np.trace(proc.M(t)))
    medians, spreads, pooled = [], [], []
    for j, N in enumerate(Ns):
        means = []
        for r in range(replicates):
            ens = PathEnsemble(N, K, seed=seed + 1000 * j + r)
            logs = np.concatenate([2.0 * proc.zeta(ens.block(a, b), t) for a, b in ens.spans()])
            means.append(float(np.mean(np.exp(logs))))
            if j == len(Ns) - 1:
                pooled.append(logs)
        means = np.array(means)
        medians.append(float(np.median(means)))
        spreads.append(float(1.2533 * means.std(ddof=1) / math.sqrt(replicates)))
    tail = quadratic_tail_index(np.concatenate(pooled) + 2.0 * trM)
    return MomentLadder(t, list(Ns), medians, spreads, exp2zeta_closed_form(proc, t),
                        tail[0], tail[1], 1.0 / (4.0 * lam_max(proc, t)))


# ---------------------------------------------------------------------------
# linear drift example


def quadratic_shift(M: np.ndarray, c: np.ndarray):
    """(z+c)^T M (z+c) - tr M  =  z^T M z + b^T z + kappa."""
    b = (M + M.T) @ c
    kappa = c @ M @ c - np.trace(M)
    return b, kappa


def gaussian_quadratic_mgf(M: np.ndarray, b: np.ndarray, kappa=0.0):
    """E[exp(z^T M z + b^T z + kappa)] = det(I-2M)^-1/2 exp(b^T (I-2M)^-1 b / 2 + kappa)."""
    A = np.eye(M.shape[0]) - 2.0 * M
    ev = np.linalg.eigvalsh(0.5 * (A + A.T))
    if ev[0] <= 0:
        raise BeyondLifetimeError("I - 2M is not positive definite: beyond the life time")
    logdet = float(np.sum(np.log(ev)))
    sol = np.linalg.solve(A, b)
    return np.exp(-0.5 * logdet + 0.5 * (b @ sol) + kappa)


def closed_form_linear(x0: float, p: float, t: float, f, K: int = 64, rate: float = 1.0,
                       cache: GramCache | None = None) -> complex:
    """S(Y_t)(f) for b(y) = rate*y: x0 e^{rate t} E[exp(zeta_t^{(f)})].

    f may be a TestFunction, a coefficient vector, or complex (i f) for the
    positivity matrix.  The exponent comes from translating the path.
    """
    if t == 0:
        return complex(x0)
    proc = QwnProcess(K, p, cache)
    fk = f.coeffs if isinstance(f, TestFunction) else (np.zeros(K) if f is None else np.asarray(f))
    fk = np.pad(fk[:K], (0, max(0, K - fk.size)))
    c = proc.lam_p * fk
    M = proc.M(t)
    b, kappa = quadratic_shift(M, c)
    return complex(x0 * math.exp(rate * t) * gaussian_quadratic_mgf(M, b, kappa))


@dataclass
class PositivityReport:
    min_eig: float
    norm: float
    n: int
    hermitian_gap: float
    tol: float = 1e-8

    @property
    def passed(self) -> bool:
        return self.min_eig >= -self.tol * self.norm

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["pass"] = self.passed
        return d


def positivity_matrix(x0: float, p: float, t: float, fs, K: int = 64, rate: float = 1.0,
                      cache: GramCache | None = None) -> np.ndarray:
    """F_jl = S(Y_t)(i(f_j - f_l)) exp(-|f_j - f_l|_0^2 / 2)."""
    coeffs = [np.asarray(f.coeffs if isinstance(f, TestFunction) else f)[:K] for f in fs]
    coeffs = [np.pad(c, (0, K - c.size)) for c in coeffs]
    n = len(coeffs)
    F = np.empty((n, n), dtype=complex)
    for j in range(n):
        for l in range(n):
            d = coeffs[j] - coeffs[l]
            F[j, l] = closed_form_linear(x0, p, t, 1j * d, K, rate, cache) * math.exp(-0.5 * float(d @ d))
    return F


def positivity_certificate(x0: float, p: float, t: float, fs, K: int = 64, rate: float = 1.0,
                           cache: GramCache | None = None) -> PositivityReport:
    if x0 <= 0:
        raise ValueError("positivity needs x0 > 0")
    if len(fs) > 16:
        raise ValueError("at most 16 test functions")
    F = positivity_matrix(x0, p, t, fs, K, rate, cache)
    herm = float(np.max(np.abs(F - F.conj().T)))
    Fh = 0.5 * (F + F.conj().T)
    ev = np.linalg.eigvalsh(Fh)
    return PositivityReport(float(ev[0]), float(np.max(np.abs(ev))), len(fs), herm)

