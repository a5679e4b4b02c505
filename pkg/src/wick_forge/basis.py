"""Laguerre eigenbasis of A = -d/dt t d/dt + t/4 + 1 on the half line.

The eigenfunctions are the Laguerre functions xi_k(t) = exp(-t/2) L_k(t)
with eigenvalues k + 3/2.  Everything downstream (smoothed deltas, the
kernel K_p, Gram integrals) is built from these.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GL_ORDER = 16
GRAM_TOL = 1e-12
MAX_REFINE = 8
MAX_PANEL = 0.5
NODE_CHUNK = 1 << 15

# Bernoulli numbers B_2, B_4, B_6, B_8, B_10 for Euler-Maclaurin end corrections
_BERNOULLI = (1.0 / 6, -1.0 / 30, 1.0 / 42, -1.0 / 30, 5.0 / 66)


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralBasis:
    """Truncated spectrum lambda_k = k + 3/2, k < K."""

    K: int

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be positive, got {self.K}")

    @property
    def lam(self) -> np.ndarray:
        return np.arange(self.K, dtype=float) + 1.5

    @property
    def log_lam(self) -> np.ndarray:
        return np.log(self.lam)

    def power(self, p: float) -> np.ndarray:
        """lambda_k**p, evaluated in log space."""
        with np.errstate(over="raise"):
            return np.exp(p * self.log_lam)


def _check_times(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("time must be finite")
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    return t


def laguerre_functions(K: int, t) -> np.ndarray:
    """Return xi_0..xi_{K-1} at `t`, shape (K,) + shape(t).

    Runs the three-term recurrence on the damped sequence itself,
    (n+1) xi_{n+1} = (2n+1-t) xi_n - n xi_{n-1},
    so that L_k(t) is never formed on its own.
    """
    t = _check_times(t)
    out = np.empty((K,) + t.shape)
    out[0] = np.exp(-0.5 * t)
    if K > 1:
        out[1] = (1.0 - t) * out[0]
    for n in range(1, K - 1):
        out[n + 1] = ((2 * n + 1 - t) * out[n] - n * out[n - 1]) / (n + 1)
    return out


def laguerre_eval(k: int, t: float) -> float:
    if k < 0:
        raise ValueError("degree must be nonnegative")
    return float(laguerre_functions(k + 1, t)[k])


def spectral_tail(K: int, p: float) -> tuple[float, float]:
    """Sum_{k>=K} (k+3/2)**(-2p) by Euler-Maclaurin.

    Returns (estimate, error bound).  The summand is completely monotone,
    so the remainder is bounded by the first omitted correction.
    """
    s = 2.0 * p
    if s <= 1.0:
        return math.inf, math.inf
    x = K + 1.5
    logx = math.log(x)
    total = math.exp((1.0 - s) * logx) / (s - 1.0) + 0.5 * math.exp(-s * logx)
    rising = s  # (s)_{2j-1}
    last = 0.0
    for j, b in enumerate(_BERNOULLI, start=1):
        term = b / math.factorial(2 * j) * rising * math.exp((-s - 2 * j + 1) * logx)
        if j == len(_BERNOULLI):
            last = abs(term)
            break
        total += term
        rising *= (s + 2 * j - 1) * (s + 2 * j)
    return total, last


@dataclass
class DeltaNorm:
    """Truncated |A^{-p} delta_t|_0^2 with its truncation accounting."""

    value: float
    tail: float
    tail_err: float
    warning: str | None = None

    @property
    def total(self) -> float:
        return self.value + self.tail


def _p_warning(p: float) -> str | None:
    if p <= 0.5:
        return f"p={p} <= 1/2: series not uniformly convergent, value depends on K"
    return None


def delta_norm_sq(t: float, p: float, K: int = 64) -> DeltaNorm:
    """sum_{k<K} lambda_k^{-2p} xi_k(t)^2 plus the tail sum_{k>=K} lambda_k^{-2p}.

    Since |xi_k| <= 1 the tail is an upper bound for the missing part; it is
    exact at t = 0.
    """
    basis = SpectralBasis(K)
    xi = laguerre_functions(K, t)
    value = float(basis.power(-2 * p) @ xi**2)
    tail, err = spectral_tail(K, p)
    return DeltaNorm(value, tail, err, _p_warning(p))


def delta_norm_sq_grid(ts, p: float, K: int = 64) -> np.ndarray:
    ts = np.asarray(ts, dtype=float)
    w = SpectralBasis(K).power(-2 * p)
    out = np.empty(ts.shape)
    flat = ts.ravel()
    res = out.reshape(-1)
    step = max(1, NODE_CHUNK * 4 // K)
    for i in range(0, flat.size, step):
        xi = laguerre_functions(K, flat[i:i + step])
        res[i:i + step] = w @ xi**2
    return out


def delta_vector(t: float, p: float, K: int = 64) -> np.ndarray:
    """Coordinates of delta_t^p = A^{-p} delta_t in the xi basis."""
    return SpectralBasis(K).power(-p) * laguerre_functions(K, t)


def kernel_Kp(r: float, s: float, p: float, K: int = 64) -> float:
    """K_p(r, s) = <delta_r^p, delta_s^p>, truncated to K modes."""
    xr = laguerre_functions(K, r)
    xs = laguerre_functions(K, s)
    return float(SpectralBasis(K).power(-2 * p) @ (xr * xs))


@dataclass
class SupResult:
    value: float
    argmax: float
    tail: float
    warning: str | None = None

    @property
    def total(self) -> float:
        return self.value + self.tail


def sup_delta_norm(p: float, K: int = 64, t_grid: float = 50.0, n_grid: int = 10001) -> SupResult:
    """Grid maximum of the truncated |delta_r^p|^2 over [0, t_grid], with r=0 always included."""
    ts = np.linspace(0.0, t_grid, n_grid)
    vals = delta_norm_sq_grid(ts, p, K)
    i = int(np.argmax(vals))
    tail, _ = spectral_tail(K, p)
    return SupResult(float(vals[i]), float(ts[i]), tail, _p_warning(p))


# ---------------------------------------------------------------------------
# Gram integrals G_jk(t) = int_0^t xi_j xi_k ds


def panel_width(j: int, k: int) -> float:
    return min(MAX_PANEL, 4.0 / (j + k + 1))


def _gl_rule(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _gl_gram(K: int, a: float, b: float, n_panels: int, order: int) -> np.ndarray:
    """Composite Gauss-Legendre for the full K x K matrix on [a, b]."""
    x, w = _gl_rule(order)
    edges = np.linspace(a, b, n_panels + 1)
    h = np.diff(edges)
    edges = edges[:-1]
    out = np.zeros((K, K))
    per = max(1, NODE_CHUNK // order)
    for i in range(0, n_panels, per):
        lo, hh = edges[i:i + per], h[i:i + per]
        nodes = (lo[:, None] + hh[:, None] * x).ravel()
        wts = (hh[:, None] * w).ravel()
        xi = laguerre_functions(K, nodes)
        out += (xi * wts) @ xi.T
    return 0.5 * (out + out.T)


def gram_increment(K: int, a: float, b: float, order: int = GL_ORDER,
                   tol: float = GRAM_TOL, width: float | None = None):
    """Integrate xi_j xi_k over [a, b], halving panels until two passes agree to `tol`.

    Returns (matrix, error estimate, panels used).
    """
    if b < a:
        raise ValueError("interval reversed")
    if b == a:
        return np.zeros((K, K)), 0.0, 0
    width = panel_width(K - 1, K - 1) if width is None else width
    n = max(1, math.ceil((b - a) / width))
    prev = _gl_gram(K, a, b, n, order)
    for _ in range(MAX_REFINE):
        n *= 2
        cur = _gl_gram(K, a, b, n, order)
        err = float(np.max(np.abs(cur - prev)))
        if err <= tol:
            return cur, err, n
        prev = cur
    raise QuadratureError(
        f"Gram quadrature on [{a}, {b}] did not reach {tol:g} after {MAX_REFINE} "
        f"refinements (last change {err:.3e}, {n} panels of order {order})")


def _gl_gram_batch(K: int, a: np.ndarray, b: np.ndarray, n_panels: int, order: int) -> np.ndarray:
    """Same rule as `_gl_gram`, for many intervals sharing one panel count."""
    x, w = _gl_rule(order)
    frac = np.arange(n_panels) / n_panels
    out = np.empty((a.size, K, K))
    per = max(1, NODE_CHUNK // (order * n_panels))
    for i in range(0, a.size, per):
        aa, bb = a[i:i + per], b[i:i + per]
        h = (bb - aa) / n_panels
        lo = aa[:, None] + (bb - aa)[:, None] * frac
        nodes = lo[:, :, None] + h[:, None, None] * x
        wts = h[:, None, None] * np.broadcast_to(w, nodes.shape)
        xi = laguerre_functions(K, nodes.reshape(len(aa), -1))
        wx = xi * wts.reshape(len(aa), -1)
        blk = np.einsum("kmn,jmn->mkj", wx, xi)
        out[i:i + per] = 0.5 * (blk + blk.transpose(0, 2, 1))
    return out


def _batched_increments(K, a, b, order, tol):
    width = panel_width(K - 1, K - 1)
    n = max(1, math.ceil(float(np.max(b - a)) / width))
    prev = _gl_gram_batch(K, a, b, n, order)
    for _ in range(MAX_REFINE):
        n *= 2
        cur = _gl_gram_batch(K, a, b, n, order)
        err = float(np.max(np.abs(cur - prev)))
        if err <= tol:
            return cur, err
        prev = cur
    raise QuadratureError(f"batched Gram quadrature did not reach {tol:g} (last change {err:.3e})")


def gram_matrix(K: int, t: float, order: int = GL_ORDER, tol: float = GRAM_TOL) -> np.ndarray:
    t = float(_check_times(t))
    return gram_increment(K, 0.0, t, order, tol)[0]


def gram(j: int, k: int, t: float, order: int = GL_ORDER, tol: float = GRAM_TOL) -> float:
    """G_jk(t) for a single pair, panels sized to the oscillation of xi_j xi_k."""
    if j < 0 or k < 0:
        raise ValueError("indices must be nonnegative")
    t = float(_check_times(t))
    K = max(j, k) + 1
    m, _, _ = gram_increment(K, 0.0, t, order, tol, width=panel_width(j, k))
    return float(m[j, k])


def _laguerre_sq_tail_log10(k: int, T: float) -> float:
    """log10 of an upper bound for int_T^inf xi_k^2.

    Uses |L_k(t)| <= sum_i C(k,i) t^i / i! and the upper incomplete gamma
    function for int_T^inf e^{-t} t^n dt.
    """
    from scipy.special import comb, gammaincc, gammaln

    i = np.arange(k + 1)
    la = np.log(comb(k, i)) - gammaln(i + 1)
    n = i[:, None] + i[None, :]
    q = gammaincc(n + 1, T)
    with np.errstate(divide="ignore"):
        lg = gammaln(n + 1) + np.log(q)
    x = la[:, None] + la[None, :] + lg
    m = np.max(x)
    if not np.isfinite(m):
        return -np.inf
    return float((m + np.log(np.sum(np.exp(x - m)))) / np.log(10))


def tail_horizon(K: int, target: float = 1e-10, start: float = 10.0) -> tuple[float, float]:
    """Smallest T on a doubling-then-bisection search with int_T^inf xi_{K-1}^2 bound below `target`.

    The bound for the highest mode dominates the lower ones; by Cauchy-Schwarz
    it also bounds every off-diagonal tail.  Returns (T, bound).
    """
    goal = math.log10(target)
    worst = lambda T: max(_laguerre_sq_tail_log10(k, T) for k in {0, K // 2, K - 1})
    hi = start
    while worst(hi) > goal:
        hi *= 2
    lo = hi / 2 if hi > start else 0.0
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        if worst(mid) > goal:
            lo = mid
        else:
            hi = mid
    return hi, 10 ** worst(hi)


# ---------------------------------------------------------------------------
# Persistent cache


MAGIC = b"WFG1"
_HEADER = struct.Struct("<4sIIId")


def git_blob_hash(data: bytes) -> str:
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def parse_grid(spec) -> np.ndarray:
    """'a:b:n' (inclusive linspace), a comma list, or an array-like."""
    if isinstance(spec, str):
        if ":" in spec:
            a, b, n = spec.split(":")
            return np.linspace(float(a), float(b), int(n))
        return np.array([float(v) for v in spec.split(",")])
    return np.asarray(spec, dtype=float)


@dataclass
class GramCache:
    """G[m] = int_0^{t_m} xi xi^T ds on a fixed time grid starting at 0."""

    K: int
    times: np.ndarray
    table: np.ndarray
    order: int = GL_ORDER
    tol: float = GRAM_TOL
    error: float = 0.0
    _memo: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def build(cls, K: int, times, order: int = GL_ORDER, tol: float = GRAM_TOL) -> "GramCache":
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or times.size == 0 or times[0] != 0.0:
            raise ValueError("grid must be one-dimensional and start at 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("grid must be strictly increasing")
        _check_times(times)
        table = np.zeros((times.size, K, K))
        if times.size > 1:
            incs, err = _batched_increments(K, times[:-1], times[1:], order, tol)
            table[1:] = np.cumsum(incs, axis=0)
        else:
            err = 0.0
        return cls(K, times, table, order, tol, err)

    @property
    def M(self) -> int:
        return self.times.size

    def index(self, t: float) -> int | None:
        i = int(np.searchsorted(self.times, t))
        if i < self.M and self.times[i] == t:
            return i
        return None

    def matrix(self, t: float) -> np.ndarray:
        """G(t); off-grid times extend from the nearest cached node below and are memoized."""
        i = self.index(t)
        if i is not None:
            return self.table[i]
        with self._lock:
            if t not in self._memo:
                j = max(0, int(np.searchsorted(self.times, t)) - 1)
                inc, _, _ = gram_increment(self.K, self.times[j], t, self.order, self.tol)
                self._memo[t] = self.table[j] + inc
            return self._memo[t]

    def gram(self, j: int, k: int, t: float) -> float:
        return float(self.matrix(t)[j, k])

    # -- persistence -------------------------------------------------------

    def to_bytes(self) -> bytes:
        iu = np.triu_indices(self.K)
        packed = self.table[:, iu[0], iu[1]]
        parts = [
            _HEADER.pack(MAGIC, self.K, self.M, self.order, self.tol),
            self.times.astype("<f8").tobytes(),
            packed.astype("<f8").tobytes(),
        ]
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "GramCache":
        magic, K, M, order, tol = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        off = _HEADER.size
        times = np.frombuffer(data, "<f8", M, off).copy()
        off += 8 * M
        npk = K * (K + 1) // 2
        packed = np.frombuffer(data, "<f8", M * npk, off).reshape(M, npk)
        table = np.empty((M, K, K))
        iu = np.triu_indices(K)
        table[:, iu[0], iu[1]] = packed
        table[:, iu[1], iu[0]] = packed
        return cls(K, times, table, order, tol)

    def content_hash(self) -> str:
        return git_blob_hash(self.to_bytes())

    def metadata(self) -> dict:
        return {
            "K": self.K,
            "M": self.M,
            "t_min": float(self.times[0]),
            "t_max": float(self.times[-1]),
            "quadrature": {"rule": "gauss-legendre", "order": self.order,
                           "tol": self.tol, "error_estimate": self.error},
            "hash": self.content_hash(),
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        data = self.to_bytes()
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)
        meta = self.metadata()
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, path) -> "GramCache":
        path = Path(path)
        cache = cls.from_bytes(path.read_bytes())
        side = path.with_suffix(".json")
        if side.exists():
            cache.error = json.loads(side.read_text())["quadrature"]["error_estimate"]
        return cache


def cached_gram(K: int, times, cache_dir=None, order: int = GL_ORDER) -> GramCache:
    """Load a GramCache for (K, grid) from `cache_dir`, building and saving it on a miss."""
    times = np.asarray(times, dtype=float)
    if cache_dir is None:
        return GramCache.build(K, times, order)
    key = hashlib.sha1(times.astype("<f8").tobytes() + struct.pack("<II", K, order)).hexdigest()[:16]
    path = Path(cache_dir) / f"gram_K{K}_{key}.wfg"
    if path.exists():
        return GramCache.load(path)
    cache = GramCache.build(K, times, order)
    cache.save(path)
    return cache
