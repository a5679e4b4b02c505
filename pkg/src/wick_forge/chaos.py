"""Truncated Wiener chaos algebra over K Gaussian coordinates.

An expansion is X = sum_alpha c_alpha H_alpha with H_alpha = prod_k He_{alpha_k}(Z_k),
He the probabilists' Hermite polynomials and Z_k = I_1(xi_k).  Multi-indices are
stored as sorted tuples of (coordinate, degree) pairs with no zero degrees, so
the empty tuple is the constant term.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np

from .basis import SpectralBasis, laguerre_functions

D_MAX = 12
PRUNE = 1e-15
_LOG_MAX = 709.0


class DegreeCapError(ValueError):
    pass


# ---------------------------------------------------------------------------
# multi-indices


def multi_index(spec: Mapping[int, int] | Iterable[tuple[int, int]] = ()) -> tuple:
    items = spec.items() if isinstance(spec, Mapping) else spec
    out = {}
    for k, d in items:
        k, d = int(k), int(d)
        if k < 0 or d < 0:
            raise ValueError(f"bad multi-index entry {(k, d)}")
        if d:
            out[k] = out.get(k, 0) + d
    return tuple(sorted(out.items()))


def degree(alpha: tuple) -> int:
    return sum(d for _, d in alpha)


def mi_factorial(alpha: tuple) -> int:
    return math.prod(math.factorial(d) for _, d in alpha)


def _add(a: tuple, b: tuple) -> tuple:
    if not a:
        return b
    if not b:
        return a
    out = dict(a)
    for k, d in b:
        out[k] = out.get(k, 0) + d
    return tuple(sorted(out.items()))


@lru_cache(maxsize=None)
def hermite_linearization(m: int, n: int) -> tuple:
    """He_m He_n = sum_r C(m,r) C(n,r) r! He_{m+n-2r}, as ((degree, coefficient), ...)."""
    return tuple((m + n - 2 * r, float(math.comb(m, r) * math.comb(n, r) * math.factorial(r)))
                 for r in range(min(m, n) + 1))


def _product_terms(a: tuple, b: tuple):
    da = dict(a)
    shared = [(k, da[k], d) for k, d in b if k in da]
    if not shared:
        yield _add(a, b), 1.0
        return
    keys = {k for k, _, _ in shared}
    base = {k: d for k, d in a if k not in keys}
    base.update((k, d) for k, d in b if k not in keys)
    options = [hermite_linearization(m, n) for _, m, n in shared]
    for combo in itertools.product(*options):
        idx = dict(base)
        coef = 1.0
        for (k, _, _), (deg, c) in zip(shared, combo):
            coef *= c
            if deg:
                idx[k] = deg
        yield tuple(sorted(idx.items())), coef


# ---------------------------------------------------------------------------
# expansions


@dataclass(frozen=True)
class ChaosExpansion:
    """Sparse Hermite expansion over K coordinates.  Treat as immutable."""

    K: int
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        for alpha in self.terms:
            if alpha and alpha[-1][0] >= self.K:
                raise ValueError(f"multi-index {alpha} outside K={self.K}")

    # -- constructors --------------------------------------------------------

    @classmethod
    def constant(cls, c: float, K: int) -> "ChaosExpansion":
        return cls(K, {(): float(c)} if c else {})

    @classmethod
    def hermite(cls, alpha, K: int, c: float = 1.0) -> "ChaosExpansion":
        return cls(K, {multi_index(alpha): float(c)})

    @classmethod
    def coordinate(cls, k: int, K: int) -> "ChaosExpansion":
        return cls.hermite({k: 1}, K)

    @classmethod
    def first_chaos(cls, h, c0: float = 0.0) -> "ChaosExpansion":
        """c0 + I_1(h) with h given by its xi-coefficients."""
        h = np.asarray(h, dtype=float)
        terms = {((k, 1),): float(v) for k, v in enumerate(h) if v != 0.0}
        if c0:
            terms[()] = float(c0)
        return cls(h.size, terms)

    @classmethod
    def second_chaos(cls, B) -> "ChaosExpansion":
        """I_2(B) = z^T B z - tr B for a symmetric matrix B."""
        B = np.asarray(B, dtype=float)
        K = B.shape[0]
        terms = {}
        for j in range(K):
            if B[j, j]:
                terms[((j, 2),)] = float(B[j, j])
            for k in range(j + 1, K):
                v = B[j, k] + B[k, j]
                if v:
                    terms[((j, 1), (k, 1))] = float(v)
        return cls(K, terms)

    # -- basic algebra ---------------------------------------------------------

    def _check(self, other: "ChaosExpansion"):
        if not isinstance(other, ChaosExpansion):
            raise TypeError(f"expected ChaosExpansion, got {type(other).__name__}")
        if other.K != self.K:
            raise ValueError(f"K mismatch: {self.K} vs {other.K}")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = ChaosExpansion.constant(other, self.K)
        self._check(other)
        out = dict(self.terms)
        for a, c in other.terms.items():
            out[a] = out.get(a, 0.0) + c
        return ChaosExpansion(self.K, out).pruned()

    __radd__ = __add__

    def __neg__(self):
        return ChaosExpansion(self.K, {a: -c for a, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self + (-other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, s):
        if isinstance(s, ChaosExpansion):
            return NotImplemented
        return ChaosExpansion(self.K, {a: s * c for a, c in self.terms.items()}).pruned()

    __rmul__ = __mul__

    def pruned(self, thresh: float = PRUNE) -> "ChaosExpansion":
        return ChaosExpansion(self.K, {a: c for a, c in self.terms.items() if abs(c) >= thresh})

    @property
    def degree(self) -> int:
        return max((degree(a) for a in self.terms), default=0)

    def coefficient(self, alpha) -> float:
        return self.terms.get(multi_index(alpha), 0.0)

    def support(self) -> list[int]:
        return sorted({k for a in self.terms for k, _ in a})

    def chaos_part(self, n: int) -> "ChaosExpansion":
        return ChaosExpansion(self.K, {a: c for a, c in self.terms.items() if degree(a) == n})

    def max_abs_diff(self, other: "ChaosExpansion") -> float:
        self._check(other)
        keys = set(self.terms) | set(other.terms)
        return max((abs(self.terms.get(a, 0.0) - other.terms.get(a, 0.0)) for a in keys), default=0.0)

    def scale(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        """Pointwise values at coordinate samples z of shape (N, K)."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        out = np.zeros(z.shape[0])
        if not self.terms:
            return out
        top = self.degree
        cache: dict[int, list] = {}

        def he(k):
            if k not in cache:
                x = z[:, k]
                vals = [np.ones_like(x), x]
                for n in range(1, top):
                    vals.append(x * vals[n] - n * vals[n - 1])
                cache[k] = vals
            return cache[k]

        for a, c in self.terms.items():
            term = np.full(z.shape[0], c)
            for k, d in a:
                term = term * he(k)[d]
            out += term
        return out

    # -- serialization -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "terms": [{"alpha": {str(k): d for k, d in a}, "c": c}
                      for a, c in sorted(self.terms.items())],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ChaosExpansion":
        if "K" not in data or "terms" not in data:
            raise ValueError("chaos JSON needs 'K' and 'terms'")
        terms: dict = {}
        for t in data["terms"]:
            a = multi_index({int(k): int(d) for k, d in t["alpha"].items()})
            terms[a] = terms.get(a, 0.0) + float(t["c"])
        return cls(int(data["K"]), terms)

    @classmethod
    def from_json(cls, text: str) -> "ChaosExpansion":
        return cls.from_dict(json.loads(text))


def expectation(X: ChaosExpansion) -> float:
    return X.terms.get((), 0.0)


def _log_weight(alpha: tuple, log_lam: np.ndarray) -> float:
    return sum(d * log_lam[k] for k, d in alpha)


def norm(X: ChaosExpansion, q: float = 0.0) -> float:
    """||X||_q^2 = sum alpha! prod lambda_k^{2 q alpha_k} c_alpha^2."""
    log_lam = SpectralBasis(X.K).log_lam
    total = 0.0
    for a, c in X.terms.items():
        if c == 0.0:
            continue
        e = 2.0 * (q * _log_weight(a, log_lam) + math.log(abs(c))) + math.log(mi_factorial(a))
        if e > _LOG_MAX:
            raise OverflowError(f"norm term for {a} overflows")
        total += math.exp(e)
    return math.sqrt(total)


def gamma(X: ChaosExpansion, p: float, prune: bool = True) -> ChaosExpansion:
    """Second quantization Gamma(A^p): c_alpha -> c_alpha prod_k lambda_k^{p alpha_k}."""
    log_lam = SpectralBasis(X.K).log_lam
    out = {}
    for a, c in X.terms.items():
        if c == 0.0:
            continue
        e = p * _log_weight(a, log_lam) + math.log(abs(c))
        if e > _LOG_MAX:
            raise OverflowError(f"Gamma(A^{p}) overflows on {a}")
        out[a] = math.copysign(math.exp(e), c)
    Y = ChaosExpansion(X.K, out)
    return Y.pruned() if prune else Y


def _degree_guard(a, b, d_max, op):
    if degree(a) + degree(b) > d_max:
        raise DegreeCapError(f"{op}: H{dict(a)} x H{dict(b)} exceeds degree cap {d_max}")


def wick(X: ChaosExpansion, Y: ChaosExpansion, d_max: int = D_MAX, prune: bool = True) -> ChaosExpansion:
    """Wick product: H_alpha <> H_beta = H_{alpha+beta}."""
    X._check(Y)
    out: dict = defaultdict(float)
    for a, ca in X.terms.items():
        for b, cb in Y.terms.items():
            _degree_guard(a, b, d_max, "wick")
            out[_add(a, b)] += ca * cb
    Z = ChaosExpansion(X.K, dict(out))
    return Z.pruned() if prune else Z


def multiply(X: ChaosExpansion, Y: ChaosExpansion, d_max: int = D_MAX, prune: bool = True) -> ChaosExpansion:
    """Ordinary product, re-expanded through per-coordinate Hermite linearization."""
    X._check(Y)
    out: dict = defaultdict(float)
    for a, ca in X.terms.items():
        for b, cb in Y.terms.items():
            _degree_guard(a, b, d_max, "multiply")
            c = ca * cb
            for idx, w in _product_terms(a, b):
                out[idx] += c * w
    Z = ChaosExpansion(X.K, dict(out))
    return Z.pruned() if prune else Z


def star_p(X: ChaosExpansion, Y: ChaosExpansion, p: float, d_max: int = D_MAX) -> ChaosExpansion:
    """X *_p Y = Gamma(A^p)(Gamma(A^-p) X . Gamma(A^-p) Y).

    The smoothed intermediates are never pruned: their coefficients can sit far
    below the pruning threshold before Gamma(A^p) scales them back up.
    """
    if p < 0:
        raise ValueError("p must be nonnegative")
    prod = multiply(gamma(X, -p, prune=False), gamma(Y, -p, prune=False), d_max, prune=False)
    return gamma(prod, p)


def wick_power(X: ChaosExpansion, n: int, d_max: int = D_MAX) -> ChaosExpansion:
    out = ChaosExpansion.constant(1.0, X.K)
    for _ in range(n):
        out = wick(out, X, d_max, prune=False)
    return out.pruned()


# ---------------------------------------------------------------------------
# test functions and the S-transform


@dataclass
class TestFunction:
    """f = sum_k f_k xi_k, stored through its first K Laguerre coefficients."""

    coeffs: np.ndarray
    tag: str | None = None

    __test__ = False  # not a pytest class

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex if np.iscomplexobj(self.coeffs) else float)

    @property
    def K(self) -> int:
        return self.coeffs.size

    def __call__(self, s):
        return self.coeffs @ laguerre_functions(self.K, s)

    def norm(self, q: float = 0.0) -> float:
        return float(np.sqrt(np.sum(SpectralBasis(self.K).power(2 * q) * np.abs(self.coeffs) ** 2)))

    def scaled(self, p: float) -> "TestFunction":
        """A^p f, coefficientwise lambda_k^p f_k."""
        return TestFunction(SpectralBasis(self.K).power(p) * self.coeffs, self.tag)

    def resized(self, K: int) -> "TestFunction":
        c = np.zeros(K, dtype=self.coeffs.dtype)
        n = min(K, self.K)
        c[:n] = self.coeffs[:n]
        return TestFunction(c, self.tag)

    def __add__(self, other: "TestFunction") -> "TestFunction":
        return TestFunction(self.coeffs + other.coeffs)

    def __mul__(self, s) -> "TestFunction":
        return TestFunction(s * self.coeffs, self.tag)

    __rmul__ = __mul__

    @classmethod
    def zero(cls, K: int) -> "TestFunction":
        return cls(np.zeros(K), "zero")

    @classmethod
    def from_bump(cls, a: float, b: float, height: float, K: int,
                  panels: int = 400, order: int = 16) -> "TestFunction":
        """Laguerre coefficients of height * exp(1 - 1/(1-x^2)), x mapping [a, b] to [-1, 1]."""
        if not 0 <= a < b:
            raise ValueError("bump needs 0 <= a < b")
        x, w = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(a, b, panels + 1)
        h = np.diff(edges)
        s = (edges[:-1, None] + 0.5 * h[:, None] * (x + 1)).ravel()
        ws = (0.5 * h[:, None] * w).ravel()
        vals = bump(s, a, b, height)
        coeffs = laguerre_functions(K, s) @ (ws * vals)
        return cls(coeffs, f"bump[{a},{b}]x{height}")

    @classmethod
    def from_dict(cls, data: Mapping, K: int | None = None) -> "TestFunction":
        if "coeffs" in data:
            f = cls(np.asarray(data["coeffs"], dtype=float))
            return f.resized(K) if K else f
        if "bump" in data:
            bp = data["bump"]
            if K is None:
                raise ValueError("bump test functions need K")
            return cls.from_bump(float(bp["a"]), float(bp["b"]), float(bp.get("height", 1.0)), K)
        raise ValueError("test function JSON needs 'coeffs' or 'bump'")

    def to_dict(self) -> dict:
        return {"coeffs": [float(v) for v in np.real(self.coeffs)]}


def bump(s, a: float, b: float, height: float = 1.0) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    x = (2 * s - a - b) / (b - a)
    out = np.zeros_like(s)
    inside = np.abs(x) < 1
    out[inside] = height * np.exp(1.0 - 1.0 / (1.0 - x[inside] ** 2))
    return out


def s_transform(X: ChaosExpansion, f) -> complex | float:
    """(SX)(f) = sum_alpha c_alpha prod_k f_k^{alpha_k}."""
    fk = f.coeffs if isinstance(f, TestFunction) else np.asarray(f)
    total = 0.0
    for a, c in X.terms.items():
        term = c
        for k, d in a:
            term = term * (fk[k] ** d if k < fk.size else 0.0)
        total = total + term
    return total


# ---------------------------------------------------------------------------
# renormalized nonlinear maps


@dataclass(frozen=True)
class Projection:
    """Projection settings for phi_tilde.

    degree: highest chaos kept; gh_order: Gauss-Hermite nodes for the exact
    path (at least 2*degree); method: 'auto' picks the exact path when X is
    constant-plus-first-chaos, else Monte Carlo.
    """

    degree: int = 10
    gh_order: int | None = None
    method: str = "auto"

    @property
    def order(self) -> int:
        return self.gh_order if self.gh_order is not None else 2 * self.degree + 8


def multinomial_wick_power(h: np.ndarray, n: int) -> dict:
    """Coefficients of I_1(h)^{<>n} = sum_{|alpha|=n} n!/alpha! h^alpha H_alpha."""
    support = [k for k in range(h.size) if h[k] != 0.0]
    out = {}
    if n == 0:
        return {(): 1.0}
    for combo in itertools.combinations_with_replacement(support, n):
        counts: dict = {}
        for k in combo:
            counts[k] = counts.get(k, 0) + 1
        alpha = tuple(sorted(counts.items()))
        coef = math.factorial(n) / mi_factorial(alpha)
        coef *= math.prod(h[k] ** d for k, d in alpha)
        out[alpha] = coef
    return out


def hermite_projection(fn, mean: float, sigma: float, degree: int, order: int) -> np.ndarray:
    """a_n = E[fn(mean + sigma G) He_n(G)] / n!, n <= degree, by Gauss-Hermite."""
    if order < 2 * degree:
        raise ValueError(f"Gauss-Hermite order {order} < 2*degree={2 * degree}")
    x, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / math.sqrt(2 * math.pi)
    vals = np.asarray(fn(mean + sigma * x), dtype=float) * w
    he_prev, he = np.ones_like(x), x.copy()
    out = np.empty(degree + 1)
    out[0] = vals.sum()
    for n in range(1, degree + 1):
        out[n] = (vals @ he) / math.factorial(n)
        he_prev, he = he, x * he - n * he_prev
    return out


def _first_chaos_parts(X: ChaosExpansion):
    h = np.zeros(X.K)
    for a, c in X.terms.items():
        if len(a) == 1 and a[0][1] == 1:
            h[a[0][0]] = c
    return X.terms.get((), 0.0), h


def phi_tilde(phi, X: ChaosExpansion, p: float, proj: Projection = Projection(),
              ensemble=None):
    """Gamma(A^p) phi(Gamma(A^-p) X).

    Exact path for X = c + I_1(h): Gamma(A^-p) X = c + sigma G with
    sigma = |A^-p h|, so phi(c + sigma G) = sum_n a_n sigma^-n I_1(A^-p h)^{<>n}
    and Gamma(A^p) maps each Wick power back to I_1(h)^{<>n}.

    Monte Carlo path (any X, needs `ensemble`): projects phi(Gamma(A^-p) X)
    on H_alpha over the support of X and returns (expansion, stderr dict).
    """
    fn = getattr(phi, "f", phi)
    method = proj.method
    if method == "auto":
        method = "exact" if X.degree <= 1 else "mc"
    if method == "exact":
        if X.degree > 1:
            raise ValueError("exact phi_tilde path needs X of degree <= 1")
        c0, h = _first_chaos_parts(X)
        u = SpectralBasis(X.K).power(-p) * h
        sigma = float(np.linalg.norm(u))
        if sigma == 0.0:
            return ChaosExpansion.constant(float(fn(np.array([c0]))[0]), X.K)
        a = hermite_projection(fn, c0, sigma, proj.degree, proj.order)
        out: dict = defaultdict(float)
        for n in range(proj.degree + 1):
            if a[n] == 0.0:
                continue
            scale = a[n] * sigma ** (-n)
            for alpha, c in multinomial_wick_power(h, n).items():
                out[alpha] += scale * c
        return ChaosExpansion(X.K, dict(out)).pruned()
    if method != "mc":
        raise ValueError(f"unknown projection method {method!r}")
    if ensemble is None:
        raise ValueError("Monte Carlo phi_tilde needs a PathEnsemble")
    if not getattr(phi, "bounded", False) and getattr(phi, "growth", None) is None:
        raise ValueError("unbounded phi on the Monte Carlo path needs a declared growth bound")
    return _phi_tilde_mc(fn, X, p, proj, ensemble)


def _index_set(support: list[int], degree_cap: int):
    out = [()]
    for n in range(1, degree_cap + 1):
        for combo in itertools.combinations_with_replacement(support, n):
            out.append(multi_index([(k, 1) for k in combo]))
    return out


def _phi_tilde_mc(fn, X, p, proj, ensemble):
    smooth = gamma(X, -p, prune=False)
    indices = _index_set(X.support(), proj.degree)
    basis_fns = [ChaosExpansion(X.K, {a: 1.0}) for a in indices]

    def chunk(z):
        vals = np.asarray(fn(smooth.evaluate(z)), dtype=float)
        cols = np.stack([vals * H.evaluate(z) for H in basis_fns], axis=1)
        return cols

    mean, stderr = ensemble.mean(chunk, width=len(indices))
    terms, errs = {}, {}
    for a, m, e in zip(indices, mean, stderr):
        f = mi_factorial(a)
        terms[a] = m / f
        errs[a] = e / f
    raw = ChaosExpansion(X.K, terms)
    scaled = gamma(raw, p)
    log_lam = SpectralBasis(X.K).log_lam
    err_scaled = {a: e * math.exp(p * _log_weight(a, log_lam)) for a, e in errs.items()}
    return scaled, err_scaled
