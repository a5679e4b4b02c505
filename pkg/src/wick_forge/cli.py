"""wick-forge command-line driver.

Every subcommand is turned into a RunConfig and dispatched through execute(),
so `wick-forge run --config file` and the direct subcommands share one path.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, basis, chaos, qwn, renorm, sde, suite
from .chaos import ChaosExpansion, TestFunction
from .funcs import make_drift, make_phi
from .report import Check, ConfigError, Report, RunConfig, flag

COMMANDS = (
    "basis.table", "basis.kernel", "basis.sup",
    "chaos.op",
    "ito.square", "ito.general",
    "sde.solve", "sde.verify", "sde.adapted", "sde.lifetime", "sde.linear", "sde.positivity",
    "renorm.prop", "renorm.bound",
    "suite",
)


class Runtime:
    """Per-run services: Gram caches, ensembles, output locations."""

    def __init__(self, cfg: RunConfig, cache_dir=None, out=None, plots=None):
        self.cfg = cfg
        self.ctx = suite.Context(seed=cfg.seed, N=cfg.N, threads=cfg.threads, chunk=cfg.chunk,
                                 grid=cfg.grid, cache_dir=Path(cache_dir) if cache_dir else None)
        self.out = Path(out) if out else None
        self.plots = Path(plots) if plots else (self.out.parent if self.out else None)

    def param(self, name, default=None):
        return self.cfg.params.get(name, default)

    def need(self, name):
        if name not in self.cfg.params or self.cfg.params[name] is None:
            raise ConfigError([f"params.{name}: required for {self.cfg.command}"])
        return self.cfg.params[name]

    def p(self, default=None) -> float:
        p = self.cfg.p if self.cfg.p is not None else default
        if p is None:
            raise ConfigError([f"p: required for {self.cfg.command}"])
        return float(p)

    def testfn(self, key="testfn", K=None):
        spec = self.param(key)
        K = K or self.cfg.K
        if spec is None:
            return None
        return TestFunction.from_dict(_json_arg(spec), K)

    def sidecar(self, suffix: str) -> Path | None:
        if self.plots is None:
            return None
        stem = self.out.stem if self.out else self.cfg.command.replace(".", "_")
        self.plots.mkdir(parents=True, exist_ok=True)
        return self.plots / f"{stem}{suffix}"


def _json_arg(value):
    """Inline JSON, a path to a JSON file, or an already-parsed value."""
    if not isinstance(value, str):
        return value
    if value.lstrip()[:1] in "[{":
        return json.loads(value)
    return json.loads(Path(value).read_text())


# ---------------------------------------------------------------------------
# handlers: each returns (checks, data)


def _basis_table(rt: Runtime):
    p, K = rt.p(1.0), rt.cfg.K
    ts = basis.parse_grid(rt.param("grid", rt.cfg.grid))
    vals = basis.delta_norm_sq_grid(ts, p, K)
    tail, _ = basis.spectral_tail(K, p)
    rows = [(t, v, tail, v + tail) for t, v in zip(ts, vals)]
    csv_path = rt.sidecar(".csv")
    if csv_path:
        from .plots import delta_plot, write_csv
        write_csv(csv_path, ["t", "delta_norm_sq", "tail", "total"], rows)
        delta_plot(ts, {p: vals}, csv_path.with_suffix(".png"))
    mono = bool(np.all(np.diff(vals[ts >= 0]) <= 1e-12)) if ts.size > 1 else True
    return [Check("delta_norm_sq_max_at_0", float(np.max(vals)), float(vals[0]) if ts[0] == 0 else np.inf, "<=")], \
        {"rows": len(rows), "nonincreasing": mono, "tail": tail}


def _basis_kernel(rt: Runtime):
    p, K = rt.p(1.0), rt.cfg.K
    ts = basis.parse_grid(rt.param("grid", "0:2:21"))
    D = basis.laguerre_functions(K, ts) * basis.SpectralBasis(K).power(-p)[:, None]
    Kp = D.T @ D
    diag = np.sqrt(np.diag(Kp))
    cs = float(np.max(np.abs(Kp) - np.outer(diag, diag)))
    csv_path = rt.sidecar(".csv")
    if csv_path:
        from .plots import write_csv
        write_csv(csv_path, ["r", "s", "K_p"],
                  [(ts[i], ts[j], Kp[i, j]) for i in range(ts.size) for j in range(ts.size)])
    return [Check("cauchy_schwarz_excess", cs, 1e-12, "<=")], {"size": int(ts.size)}


def _basis_sup(rt: Runtime):
    p, K = rt.p(1.0), rt.cfg.K
    s = basis.sup_delta_norm(p, K)
    T = 1.0 / (4.0 * s.total)
    csv_path = rt.sidecar(".csv")
    if csv_path:
        from .plots import write_csv
        write_csv(csv_path, ["p", "sup", "argmax", "tail", "total", "T"],
                  [(p, s.value, s.argmax, s.tail, s.total, T)])
    return [], {"value": s.value, "argmax": s.argmax, "tail": s.tail, "total": s.total, "T": T,
                "warning": s.warning}


def _load_expansion(spec) -> ChaosExpansion:
    if isinstance(spec, dict):
        return ChaosExpansion.from_dict(spec)
    return ChaosExpansion.from_json(Path(spec).read_text())


def _chaos_op(rt: Runtime):
    X, Y = _load_expansion(rt.need("lhs")), _load_expansion(rt.need("rhs"))
    op = rt.param("op", "wick")
    d_max = rt.cfg.D_max
    if op == "wick":
        Z = chaos.wick(X, Y, d_max)
    elif op == "mul":
        Z = chaos.multiply(X, Y, d_max)
    elif op == "star":
        Z = chaos.star_p(X, Y, rt.p(), d_max)
    else:
        raise ConfigError([f"params.op: one of wick, mul, star (got {op!r})"])
    return [], {"result": Z.to_dict(), "expectation": chaos.expectation(Z), "norm0": chaos.norm(Z, 0.0)}


def _ito_square(rt: Runtime):
    t, p, K = float(rt.need("t")), rt.p(1.0), rt.cfg.K
    r = qwn.ito_square_check(t, p, K, rt.ctx.cache(K).matrix(t), rt.cfg.tolerances.coeff_tol)
    return [Check("ito_square_discrepancy", r.discrepancy, rt.cfg.tolerances.coeff_tol, "<=")], \
        {"value": r.discrepancy, "bound": rt.cfg.tolerances.coeff_tol, **r.to_dict()}


def _ito_general(rt: Runtime):
    t, p, K = float(rt.need("t")), rt.p(1.5), rt.cfg.K
    phi = make_phi(rt.param("phi", "cos"))
    f = rt.testfn("f")
    rep = qwn.ito_formula_check(phi, p, t, f, rt.ctx.ensemble(K), cache=rt.ctx.cache(K))
    k = rt.cfg.tolerances.mc_sigma
    checks = [Check("ito_general_diff", abs(rep.diff), k * (rep.mc_stderr + rep.quad_bound), "<=", rep.mc_stderr)]
    for s, fd, abc, sig in zip(rep.fd_times, rep.fd_values, rep.abc_values, rep.fd_sigma):
        checks.append(Check(f"fd_s{s:.4f}", abs(fd - abc), k * sig, "<=", sig))
    d = rep.to_dict()
    return checks, {"value": rep.diff, "stderr": rep.mc_stderr, "bound": k * (rep.mc_stderr + rep.quad_bound), **d}


def _sde_common(rt: Runtime):
    p, K = rt.p(1.5), rt.cfg.K
    T = sde.life_time(p, K)
    t = float(rt.param("t", 0.5 * T))
    return p, K, T, t, make_drift(rt.param("b", "zero")), float(rt.param("x0", 1.0)), rt.testfn()


def _sde_solve(rt: Runtime):
    p, K, T, t, drift, x0, f = _sde_common(rt)
    ens = rt.ctx.ensemble(K)
    grid = np.linspace(0.0, t, int(rt.param("n_out", 11)))
    paths = sde.solve_paths(drift, x0, p, t, ens, f, sde.SolverConfig(rt.param("method", "rk45")), grid,
                            bool(rt.param("allow_beyond_T", False)), cache=rt.ctx.cache(K))
    U = paths.U
    mean = U.mean(axis=1)
    se = U.std(axis=1, ddof=1) / np.sqrt(U.shape[1])
    csv_path = rt.sidecar(".csv")
    if csv_path:
        from .plots import write_csv
        write_csv(csv_path, ["t", "mean_V", "mean_U", "stderr_U", "envelope"],
                  zip(grid, paths.V.mean(axis=1), mean, se, paths.envelope.max(axis=1)))
    return [Check("gronwall_violations", paths.gronwall_violations, 0, "==")], \
        {"value": float(mean[-1]), "stderr": float(se[-1]), "T": T, "t": t, "steps": paths.steps}


def _sde_verify(rt: Runtime):
    p, K, T, t, drift, x0, f = _sde_common(rt)
    r = sde.verify_integral_identity(drift, x0, p, t, f, rt.ctx.ensemble(K), cache=rt.ctx.cache(K))
    k = rt.cfg.tolerances.mc_sigma
    return [
        Check("pathwise_residual", r.pathwise_max, r.pathwise_tol, "<="),
        Check("expectation_residual", abs(r.expectation_diff), k * r.stderr, "<=", r.stderr),
        Check("gronwall_violations", r.gronwall_violations, 0, "=="),
    ], {"value": r.value, "stderr": r.stderr, "bound": k * r.stderr, **r.to_dict()}


def _sde_adapted(rt: Runtime):
    p, K, T, t, drift, x0, f = _sde_common(rt)
    g = rt.testfn("g") or TestFunction.from_bump(t + 0.1, t + 0.6, 1.0, K)
    r = sde.adaptedness_check(drift, x0, p, t, f, g, rt.ctx.ensemble(K), cache=rt.ctx.cache(K))
    return [Check("adaptedness", abs(r.diff), r.bound, "<=", r.sigma)], \
        {"value": r.diff, "stderr": r.sigma, **r.to_dict()}


def _sde_lifetime(rt: Runtime):
    K = rt.cfg.K
    ps = rt.param("ps") or [rt.p(1.0)]
    rows, checks, curves, marks = [], [], {}, {}
    cache = rt.ctx.cache(K)
    for p in ps:
        r = sde.lifetime_threshold(float(p), K, cache=cache)
        rows.append(r.to_dict())
        checks.append(Check(f"T_le_tstar_p{p}", r.T, r.t_star, "<="))
        if rt.param("ladder", False):
            lo = sde.moment_ladder(p, 0.8 * r.T, K, seed=rt.cfg.seed, cache=cache)
            checks.append(flag(f"bounded_0.8T_p{p}", lo.bounded, lo.to_dict()))
            if np.isfinite(r.t_star):
                hi = sde.moment_ladder(p, 1.2 * r.t_star, K, seed=rt.cfg.seed + 7, cache=cache)
                checks.append(flag(f"divergent_1.2tstar_p{p}", hi.divergent, hi.to_dict()))
        proc = qwn.QwnProcess(K, float(p), cache)
        ts = np.linspace(0.0, float(rt.param("t_max", 3.0)), 61)[1:]
        curves[float(p)] = (ts, [sde.lam_max(proc, t) for t in ts])
        marks[float(p)] = (r.T, r.t_star)
    png = rt.sidecar("_threshold.png")
    if png:
        from .plots import threshold_plot, write_csv
        threshold_plot(curves, marks, png)
        write_csv(png.with_suffix(".csv"), ["p", "t", "lam_max"],
                  [(p, t, v) for p, (ts, lm) in curves.items() for t, v in zip(ts, lm)])
    return checks, {"lifetime": rows}


def _sde_linear(rt: Runtime):
    p, K, T, t, _, x0, f = _sde_common(rt)
    rate = float(rt.param("rate", 1.0))
    cf = sde.closed_form_linear(x0, p, t, f, K, rate, rt.ctx.cache(K))
    checks, data = [], {"value": cf.real, "closed_form": cf}
    if rt.param("mc", True):
        mc = sde.s_transform_solution(make_drift(f"linear:{rate}"), x0, p, t, f, rt.ctx.ensemble(K),
                                      cache=rt.ctx.cache(K))
        k = rt.cfg.tolerances.mc_sigma
        checks.append(Check("closed_form_vs_mc", abs(mc.value - cf.real), k * mc.stderr, "<=", mc.stderr))
        data.update(mc=mc.value, stderr=mc.stderr, bound=k * mc.stderr)
    return checks, data


def _sde_positivity(rt: Runtime):
    p, K, T, t, _, x0, _ = _sde_common(rt)
    n = int(rt.param("n", 8))
    fs = [suite.fixture_testfunction(rt.cfg.seed + j, K) for j in range(n)]
    r = sde.positivity_certificate(x0, p, t, fs, K, float(rt.param("rate", 1.0)), rt.ctx.cache(K))
    return [Check("min_eigenvalue", r.min_eig, -r.tol * r.norm, ">=")], \
        {"value": r.min_eig, "bound": -r.tol * r.norm, **r.to_dict()}


def _h_vector(rt: Runtime):
    h = _json_arg(rt.need("h"))
    if isinstance(h, dict):
        h = h["coeffs"]
    return np.asarray(h, dtype=float)


def _renorm_prop(rt: Runtime):
    phi = make_phi(rt.param("phi", "cos"))
    r = renorm.proposition_check(phi, _h_vector(rt), rt.p(1.5), int(rt.param("degree", 10)),
                                 tol=rt.cfg.tolerances.coeff_tol)
    return [Check("proposition_discrepancy", r.discrepancy, r.tol, "<")], \
        {"value": r.discrepancy, "bound": r.tol, **r.to_dict()}


def _renorm_bound(rt: Runtime):
    phi = make_phi(rt.param("phi", "sin"))
    r = renorm.error_bound_check(phi, _h_vector(rt), rt.p(1.0), int(rt.param("degree", 12)),
                                 rt.param("sup_d2"))
    return [Check("error_bound", r.lhs, r.rhs + r.atol, "<=")], \
        {"value": r.lhs, "bound": r.rhs, **r.to_dict()}


def _suite(rt: Runtime):
    names = suite.select(rt.param("only"))
    checks, data = suite.run_suite(rt.ctx, names)
    if rt.plots is not None:
        from .plots import decay_plot, write_csv
        if "star_decay" in data:
            png = rt.sidecar("_decay.png")
            decay_plot(data["star_decay"], png)
            write_csv(png.with_suffix(".csv"), ["p", "ratio"], data["star_decay"])
        if "lifetime" in data:
            write_csv(rt.sidecar("_lifetime.csv"), ["p", "T", "T_truncated", "t_star"],
                      [(r["p"], r["T"], r["T_truncated"], r["t_star"]) for r in data["lifetime"]])
    return checks, {"groups": names, **data}


HANDLERS = {
    "basis.table": _basis_table,
    "basis.kernel": _basis_kernel,
    "basis.sup": _basis_sup,
    "chaos.op": _chaos_op,
    "ito.square": _ito_square,
    "ito.general": _ito_general,
    "sde.solve": _sde_solve,
    "sde.verify": _sde_verify,
    "sde.adapted": _sde_adapted,
    "sde.lifetime": _sde_lifetime,
    "sde.linear": _sde_linear,
    "sde.positivity": _sde_positivity,
    "renorm.prop": _renorm_prop,
    "renorm.bound": _renorm_bound,
    "suite": _suite,
}


def execute(cfg: RunConfig, cache_dir=None, out=None, plots=None) -> Report:
    cfg.validate()
    if cfg.command not in HANDLERS:
        raise ConfigError([f"command: unknown {cfg.command!r}; valid: {', '.join(COMMANDS)}"])
    rt = Runtime(cfg, cache_dir, out, plots)
    checks, data = HANDLERS[cfg.command](rt)
    return Report(cfg.command, cfg.to_dict(), checks, data,
                  {"version": __version__, **rt.ctx.provenance()})


# ---------------------------------------------------------------------------
# argument parsing


def _globals(parser: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = parser.add_argument_group("global options")
    g.add_argument("--K", type=int, default=d(None), help="Laguerre truncation (default per command)")
    g.add_argument("--D", type=int, default=d(12), dest="D_max", help="total-degree cap")
    g.add_argument("--seed", type=int, default=d(42))
    g.add_argument("--threads", type=int, default=d(1))
    g.add_argument("--samples", "-N", type=int, default=d(100_000), dest="N")
    g.add_argument("--grid", default=d("0:4:401"), help="Gram grid 'a:b:n' or comma list")
    g.add_argument("--cache-dir", default=d(None))
    g.add_argument("--out", default=d(None), help="report path (JSON); CSV/PNG go alongside")
    g.add_argument("--plots", default=d(None), help="directory for CSV tables and figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wick-forge", description="Truncated white-noise calculus engine")
    _globals(parser, False)
    common = argparse.ArgumentParser(add_help=False)
    _globals(common, True)
    sub = parser.add_subparsers(dest="group", required=True)

    b = sub.add_parser("basis", parents=[common], help="Laguerre basis tables")
    b.add_argument("action", choices=["table", "kernel", "sup"])
    b.add_argument("--p", type=float, default=1.0)

    c = sub.add_parser("chaos", parents=[common], help="binary chaos operations")
    c.add_argument("action", choices=["op"])
    c.add_argument("--lhs", required=True)
    c.add_argument("--rhs", required=True)
    c.add_argument("--op", choices=["wick", "mul", "star"], default="wick")
    c.add_argument("--p", type=float, default=None)

    i = sub.add_parser("ito", parents=[common], help="Ito-type formula checks")
    i.add_argument("action", choices=["square", "general"])
    i.add_argument("--t", type=float, required=True)
    i.add_argument("--p", type=float, default=None)
    i.add_argument("--phi", default="cos")
    i.add_argument("--f", default=None, help="test function JSON file or inline JSON")

    s = sub.add_parser("sde", parents=[common], help="SDE solver and contract checks")
    s.add_argument("action", choices=["solve", "verify", "adapted", "lifetime", "linear", "positivity"])
    s.add_argument("--b", default="zero", help="zero | id | linear:<a> | tanh:<a> | sin:<a>")
    s.add_argument("--x0", type=float, default=1.0)
    s.add_argument("--p", type=float, default=None)
    s.add_argument("--t", type=float, default=None, help="time (default half the life time)")
    s.add_argument("--testfn", default=None)
    s.add_argument("--g", default=None, help="late test function for 'adapted'")
    s.add_argument("--method", choices=["rk4", "rk45"], default="rk45")
    s.add_argument("--ladder", action="store_true", help="Monte Carlo moment ladder for 'lifetime'")
    s.add_argument("--n", type=int, default=8, help="family size for 'positivity'")
    s.add_argument("--allow-beyond-T", action="store_true")

    r = sub.add_parser("renorm", parents=[common], help="first-chaos renormalization")
    r.add_argument("action", choices=["prop", "bound"])
    r.add_argument("--phi", default=None)
    r.add_argument("--h", required=True, help="coefficient list as JSON or file")
    r.add_argument("--p", type=float, default=None)
    r.add_argument("--degree", type=int, default=None)
    r.add_argument("--sup-d2", type=float, default=None)

    q = sub.add_parser("suite", parents=[common], help="run the fixture checks")
    sel = q.add_mutually_exclusive_group(required=True)
    sel.add_argument("--all", action="store_true")
    sel.add_argument("--only", nargs="+", metavar="NAME")

    u = sub.add_parser("run", parents=[common], help="run a configuration file")
    u.add_argument("--config", required=True)
    return parser


_DEFAULT_K = {"ito.square": 32}


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    command = f"{ns.group}.{ns.action}" if ns.group != "suite" else "suite"
    params: dict = {}
    keep = ("t", "phi", "f", "b", "x0", "testfn", "g", "method", "n", "lhs", "rhs", "op", "h",
            "degree", "sup_d2", "ladder", "allow_beyond_T")
    for key in keep:
        v = getattr(ns, key, None)
        if v is not None and v is not False:
            params[key] = v
    if command == "suite" and ns.only:
        params["only"] = ns.only
    K = ns.K if ns.K is not None else _DEFAULT_K.get(command, 64)
    return RunConfig(command=command, K=K, seed=ns.seed, D_max=ns.D_max, p=getattr(ns, "p", None),
                     grid=ns.grid, N=ns.N, threads=ns.threads, params=params).validate()


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        if ns.group == "run":
            cfg = RunConfig.load(ns.config)
        else:
            cfg = config_from_args(ns)
        if cfg.command == "suite" and cfg.params.get("only"):
            suite.select(cfg.params["only"])
        t0 = time.perf_counter()
        report = execute(cfg, ns.cache_dir, ns.out, ns.plots)
        elapsed = time.perf_counter() - t0
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if ns.out:
        report.write(ns.out, elapsed)
    else:
        sys.stdout.write(report.to_json())
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}", file=sys.stderr)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())

