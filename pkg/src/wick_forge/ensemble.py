"""Reproducible Gaussian sample ensembles.

Sample i is drawn from a Philox stream keyed by the master seed, starting at
counter i * ceil(K/4), so any single sample can be regenerated on its own and
the bulk draw is bit-identical to the per-sample one.  Reductions run over a
fixed chunk partition and are combined in chunk order, which keeps results
independent of the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

DEFAULT_CHUNK = 16384


def _uniforms(raw: np.ndarray) -> np.ndarray:
    # 53-bit mantissa, shifted by half an ulp to stay inside (0, 1)
    return ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53


@dataclass(frozen=True)
class PathEnsemble:
    N: int
    K: int
    seed: int = 0
    chunk: int = DEFAULT_CHUNK
    threads: int = 1

    def __post_init__(self):
        if self.N < 1 or self.K < 1:
            raise ValueError("ensemble needs N >= 1 and K >= 1")

    @property
    def stride(self) -> int:
        """Draws reserved per sample (K rounded up to Philox's block of four)."""
        return 4 * math.ceil(self.K / 4)

    def sample_seed(self, i: int) -> tuple[int, int]:
        """(Philox key, starting counter) for sample i."""
        return self.seed, i * self.stride // 4

    def _draw(self, start: int, count: int) -> np.ndarray:
        counter = np.zeros(4, dtype=np.uint64)
        counter[0] = start * self.stride // 4
        raw = Philox(key=self.seed, counter=counter).random_raw(count * self.stride)
        z = ndtri(_uniforms(raw)).reshape(count, self.stride)
        return z[:, : self.K]

    def sample(self, i: int) -> np.ndarray:
        if not 0 <= i < self.N:
            raise IndexError(i)
        return self._draw(i, 1)[0]

    def block(self, start: int, stop: int) -> np.ndarray:
        stop = min(stop, self.N)
        return self._draw(start, stop - start)

    def spans(self):
        return [(a, min(a + self.chunk, self.N)) for a in range(0, self.N, self.chunk)]

    def all(self) -> np.ndarray:
        return self.block(0, self.N)

    def with_size(self, N: int) -> "PathEnsemble":
        return PathEnsemble(N, self.K, self.seed, self.chunk, self.threads)

    def map(self, fn, *args):
        """Apply fn(z_block, start, stop, *args) to every chunk; results in chunk order."""
        jobs = self.spans()

        def run(span):
            a, b = span
            return fn(self.block(a, b), a, b, *args)

        if self.threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                return list(pool.map(run, jobs))
        return [run(s) for s in jobs]

    def mean(self, fn, width: int | None = None):
        """Sample mean and standard error of fn(z) over the ensemble.

        fn maps a (n, K) block to an array of shape (n,) or (n, width).
        Chunk moments are merged in fixed order (Chan et al. update).
        """
        parts = self.map(lambda z, a, b: _moments(np.asarray(fn(z))))
        return merge_moments(parts)


def _moments(x: np.ndarray):
    n = x.shape[0]
    m = x.mean(axis=0)
    m2 = ((x - m) ** 2).sum(axis=0)
    return n, m, m2


def merge_moments(parts):
    n, mean, m2 = parts[0]
    mean = np.array(mean, dtype=float)
    m2 = np.array(m2, dtype=float)
    for nb, mb, m2b in parts[1:]:
        tot = n + nb
        delta = mb - mean
        mean = mean + delta * (nb / tot)
        m2 = m2 + m2b + delta**2 * (n * nb / tot)
        n = tot
    var = m2 / max(n - 1, 1)
    return mean, np.sqrt(var / n)


def mean_stderr(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
