"""Named fixture checks, one group per verified property.

Each group returns a list of Check objects plus plot/table data.  Groups
never raise: an exception becomes a failing check carrying its message.
"""

from __future__ import annotations

import math
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import basis, chaos, qwn, renorm, sde
from .chaos import ChaosExpansion, TestFunction
from .ensemble import PathEnsemble
from .funcs import make_drift, make_phi
from .report import Check, flag

PSI1_3_2 = math.pi**2 / 2 - 4  # trigamma(3/2)


@dataclass
class Context:
    seed: int = 42
    N: int = 100_000
    threads: int = 1
    chunk: int = 16384
    grid: str = "0:4:401"
    cache_dir: Path | None = None
    _caches: dict = field(default_factory=dict)

    def cache(self, K: int) -> basis.GramCache:
        if K not in self._caches:
            self._caches[K] = basis.cached_gram(K, basis.parse_grid(self.grid), self.cache_dir)
        return self._caches[K]

    def ensemble(self, K: int, N: int | None = None, offset: int = 0) -> PathEnsemble:
        return PathEnsemble(N or self.N, K, seed=self.seed + offset, chunk=self.chunk,
                            threads=self.threads)

    def provenance(self) -> dict:
        return {f"gram_K{K}": c.content_hash() for K, c in sorted(self._caches.items())}


def fixture_testfunction(seed: int, K: int = 64, scale: float = 0.5) -> TestFunction:
    """Random test function with decaying Laguerre coefficients."""
    rng = np.random.default_rng(seed)
    k = np.arange(K)
    return TestFunction(rng.normal(size=K) * scale / (1.0 + k) ** 1.5, f"random[{seed}]")


# ---------------------------------------------------------------------------
# groups


def check_basis(ctx: Context):
    K = 64
    T_tail, bound = basis.tail_horizon(K, 1e-10)
    G = basis.gram_matrix(K, T_tail)
    resid = float(np.max(np.abs(G - np.eye(K))))
    grid = np.linspace(0.0, T_tail, 10_000)
    sup = float(np.max(np.abs(basis.laguerre_functions(K, grid))))
    grid50 = np.linspace(0.0, 50.0, 10_000)
    sup50 = float(np.max(np.abs(basis.laguerre_functions(K, grid50))))
    checks = [
        Check("orthonormality_residual", resid, 1e-8, "<", detail={"T_tail": T_tail, "tail_bound": bound}),
        Check("sup_abs_xi", max(sup, sup50), 1 + 1e-12, "<="),
    ]
    return checks, {"T_tail": T_tail}


def check_spectral(ctx: Context):
    dn = basis.delta_norm_sq(0.0, 1.0, 64)
    T = sde.life_time(1.0, 64)
    T_ref = 1.0 / (4.0 * PSI1_3_2)
    return [
        Check("delta_norm_sq_0_p1", abs(dn.total - PSI1_3_2), 1e-10, "<",
              detail={"value": dn.total, "reference": PSI1_3_2, "tail": dn.tail}),
        Check("life_time_p1", abs(T - T_ref), 1e-6, "<", detail={"T": T, "reference": T_ref}),
    ], {}


def random_expansion(rng, K: int, degree: int, n_terms: int) -> ChaosExpansion:
    terms = {}
    for _ in range(n_terms):
        d = int(rng.integers(0, degree + 1))
        alpha: dict = {}
        for _ in range(d):
            k = int(rng.integers(0, K))
            alpha[k] = alpha.get(k, 0) + 1
        terms[chaos.multi_index(alpha)] = float(rng.normal())
    return ChaosExpansion(K, terms)


def _rel(a: ChaosExpansion, b: ChaosExpansion) -> float:
    return a.max_abs_diff(b) / max(1.0, a.scale(), b.scale())


def algebra_violations(X, Y, Z, p_gamma: float) -> dict:
    ops = {
        "mul": chaos.multiply,
        "wick": chaos.wick,
        "star0": lambda a, b: chaos.star_p(a, b, 0.0),
        "star1": lambda a, b: chaos.star_p(a, b, 1.0),
        "star2": lambda a, b: chaos.star_p(a, b, 2.0),
    }
    out = {}
    for name, op in ops.items():
        out[f"{name}_comm"] = _rel(op(X, Y), op(Y, X))
        out[f"{name}_assoc"] = _rel(op(op(X, Y), Z), op(X, op(Y, Z)))
        out[f"{name}_dist"] = _rel(op(X, Y + Z), op(X, Y) + op(X, Z))
    out["gamma_wick"] = _rel(chaos.gamma(chaos.wick(X, Y), p_gamma),
                             chaos.wick(chaos.gamma(X, p_gamma), chaos.gamma(Y, p_gamma)))
    return out


def check_algebra(ctx: Context, n: int = 200):
    rng = np.random.default_rng(ctx.seed)
    worst: dict = {}
    for _ in range(n):
        K = int(rng.integers(1, 9))
        X, Y, Z = (random_expansion(rng, K, 4, int(rng.integers(1, 5))) for _ in range(3))
        for law, v in algebra_violations(X, Y, Z, float(rng.uniform(-2, 2))).items():
            worst[law] = max(worst.get(law, 0.0), v)
    return [Check(f"algebra_{law}", v, 1e-12, "<=") for law, v in sorted(worst.items())], {}


def check_star_limit(ctx: Context):
    K, t = 32, 0.1
    table = qwn.star_decay(t, K, (0, 1, 2, 4, 8), -2.0, ctx.cache(K).matrix(t))
    ratios = [r for _, r in table]
    decreasing = all(b < a for a, b in zip(ratios, ratios[1:]))
    return [
        flag("star_limit_strictly_decreasing", decreasing, {"ratios": ratios}),
        Check("star_limit_ratio_p8", ratios[-1], 1e-6, "<"),
    ], {"star_decay": table}


def check_ito_square(ctx: Context):
    K = 32
    checks = []
    for t in (0.05, 0.1, 0.2):
        G = ctx.cache(K).matrix(t)
        for p in (1.0, 1.5, 2.0):
            r = qwn.ito_square_check(t, p, K, G)
            checks.append(Check(f"ito_square_t{t}_p{p}", r.discrepancy, 1e-8, "<=",
                                detail={"scale": r.scale}))
            checks.append(Check(f"ito_square_constant_t{t}_p{p}",
                                abs(r.constant - r.constant_quad), 1e-10 * max(1.0, r.constant), "<=",
                                detail={"trace_form": r.constant, "double_integral": r.constant_quad}))
    return checks, {}


def check_ito_general(ctx: Context):
    K = 64
    f = TestFunction.from_bump(0.0, 0.2, 1.0, K)
    rep = qwn.ito_formula_check(make_phi("cos"), 1.5, 0.1, f, ctx.ensemble(K), cache=ctx.cache(K))
    checks = [Check("ito_general_diff", abs(rep.diff), 3.0 * (rep.mc_stderr + rep.quad_bound), "<=",
                    rep.mc_stderr, {"lhs": rep.lhs, "rhs": rep.rhs, "quad_bound": rep.quad_bound})]
    for s, fd, abc, sig in zip(rep.fd_times, rep.fd_values, rep.abc_values, rep.fd_sigma):
        checks.append(Check(f"ito_general_fd_s{s:.4f}", abs(fd - abc), 3.0 * sig, "<=", sig,
                            {"fd": fd, "abc": abc}))
    return checks, {}


SDE_DRIFTS = ("zero", "id", "tanh:2")


def check_sde(ctx: Context):
    K, p = 64, 1.5
    T = sde.life_time(p, K)
    t = 0.5 * T
    f = fixture_testfunction(ctx.seed, K)
    cache = ctx.cache(K)
    checks = []
    for name in SDE_DRIFTS:
        drift = make_drift(name)
        r = sde.verify_integral_identity(drift, 1.0, p, t, f, ctx.ensemble(K), cache=cache)
        checks += [
            Check(f"sde_pathwise_{name}", r.pathwise_max, 1e-8, "<="),
            Check(f"sde_expectation_{name}", abs(r.expectation_diff), 3.0 * r.stderr, "<=", r.stderr,
                  {"value": r.value, "quad_bound": r.quad_bound}),
            Check(f"sde_gronwall_{name}", r.gronwall_violations, 0, "=="),
        ]
        u = sde.uniqueness_surrogate(drift, 1.0, p, 0.8 * T, ctx.ensemble(K, 10_000, 1), f, cache=cache)
        checks += [
            Check(f"sde_rk4_vs_rk45_{name}", u["max_gap"], 1e-6, "<="),
            Check(f"sde_gronwall_0.8T_{name}", u["gronwall_violations"], 0, "=="),
        ]
    conv = sde.rk4_convergence(make_drift("tanh:2"), 1.0, p, t, f, ctx.ensemble(K, 512, 2),
                               hs=(0.04, 0.02, 0.01), cache=cache)
    checks.append(Check("sde_rk4_order", min(conv["orders"]), 3.5, ">=", detail=conv))
    return checks, {}


def check_adapted(ctx: Context):
    K, p = 64, 1.5
    t = 0.5 * sde.life_time(p, K)
    f = fixture_testfunction(ctx.seed, K)
    drift = make_drift("tanh:2")
    late = TestFunction.from_bump(t + 0.1, t + 0.6, 1.0, K)
    inside = TestFunction.from_bump(0.2 * t, 0.8 * t, 1.0, K)
    r = sde.adaptedness_check(drift, 1.0, p, t, f, late, ctx.ensemble(K), cache=ctx.cache(K))
    neg = sde.adaptedness_check(drift, 1.0, p, t, f, inside, ctx.ensemble(K), cache=ctx.cache(K))
    return [
        Check("adapted_late_g", abs(r.diff), r.bound, "<=", r.sigma, r.to_dict()),
        Check("adapted_negative_control", abs(neg.diff), 3.0 * neg.sigma, ">", neg.sigma, neg.to_dict()),
    ], {}


def check_lifetime(ctx: Context):
    K = 64
    cache = ctx.cache(K)
    checks, rows = [], []
    for p in (1.0, 1.5, 2.0, 3.0):
        r = sde.lifetime_threshold(p, K, cache=cache)
        rows.append(r.to_dict())
        checks.append(Check(f"lifetime_T_le_tstar_p{p}", r.T, r.t_star, "<=", detail=r.to_dict()))
        if p in (1.0, 1.5):
            lo = sde.moment_ladder(p, 0.8 * r.T, K, seed=ctx.seed, cache=cache)
            hi = sde.moment_ladder(p, 1.2 * r.t_star, K, seed=ctx.seed + 7, cache=cache)
            checks.append(flag(f"lifetime_bounded_0.8T_p{p}", lo.bounded, lo.to_dict()))
            checks.append(flag(f"lifetime_divergent_1.2tstar_p{p}", hi.divergent, hi.to_dict()))
    return checks, {"lifetime": rows}


def check_linear(ctx: Context):
    K, p = 64, 1.5
    T = sde.life_time(p, K)
    t = 0.5 * T
    cache = ctx.cache(K)
    drift = make_drift("id")
    checks = []
    for i in range(10):
        f = fixture_testfunction(ctx.seed + 100 + i, K)
        cf = sde.closed_form_linear(1.0, p, t, f, K, cache=cache).real
        mc = sde.s_transform_solution(drift, 1.0, p, t, f, ctx.ensemble(K, offset=10 + i), cache=cache)
        checks.append(Check(f"linear_closed_form_f{i}", abs(mc.value - cf), 3.0 * mc.stderr, "<=",
                            mc.stderr, {"closed_form": cf, "mc": mc.value}))
    fs = [fixture_testfunction(ctx.seed + 200 + j, K) for j in range(8)]
    for frac in (0.25, 0.5, 0.75):
        r = sde.positivity_certificate(1.0, p, frac * T, fs, K, cache=cache)
        checks.append(Check(f"positivity_{frac}T", r.min_eig, -1e-8 * r.norm, ">=", detail=r.to_dict()))
    return checks, {}


def check_renorm(ctx: Context):
    cos, sin = make_phi("cos"), make_phi("sin")
    lin = make_phi("poly:0.3,2")
    h2 = np.array([0.7, 0.3, 0.0, 0.0])
    e0 = np.array([1.0, 0.0, 0.0, 0.0])
    prop = renorm.proposition_check(cos, h2, 1.5, D=10)
    hc = renorm.heat_semigroup_coeffs(cos, 0.5, 10)
    checks = [
        Check("renorm_proposition_cos", prop.discrepancy, 1e-8, "<"),
        Check("renorm_kuo_residual", hc.kuo_residual, 1e-9, "<"),
    ]
    for phi in (sin, cos, lin):
        for h in (e0, h2):
            for p in (0.0, 0.5, 1.0, 2.0):
                r = renorm.error_bound_check(phi, h, p, sup_d2=0.0 if phi is lin else None)
                tag = f"renorm_bound_{phi.name}_h{int(h[1] > 0)}_p{p}"
                checks.append(Check(tag, r.lhs, r.rhs + r.atol, "<=", detail=r.to_dict()))
    return checks, {}


GROUPS = {
    "basis": check_basis,
    "spectral": check_spectral,
    "algebra": check_algebra,
    "star_limit": check_star_limit,
    "ito_square": check_ito_square,
    "ito_general": check_ito_general,
    "sde": check_sde,
    "adapted": check_adapted,
    "lifetime": check_lifetime,
    "linear": check_linear,
    "renorm": check_renorm,
}


def run_group(name: str, ctx: Context):
    try:
        return GROUPS[name](ctx)
    except Exception as exc:  # a crashing group is a failing group
        msg = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        return [flag(f"{name}_error", False, {"error": msg})], {}


def select(only=None) -> list[str]:
    if not only:
        return list(GROUPS)
    unknown = [n for n in only if n not in GROUPS]
    if unknown:
        raise ValueError(f"unknown check(s) {unknown}; valid: {sorted(GROUPS)}")
    return list(only)


def run_suite(ctx: Context, names):
    checks, data = [], {}
    for name in names:
        c, d = run_group(name, ctx)
        checks += c
        data.update(d)
    return checks, data
