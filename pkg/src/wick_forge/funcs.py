"""Scalar test functions phi and drift coefficients b, parsed from short names."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P


@dataclass(frozen=True)
class Phi:
    """A C^3 scalar function with its first three derivatives.

    bounded marks phi, phi', phi'' as bounded; growth is the polynomial degree
    otherwise.  sup_d2 is sup |phi''| when finite.
    """

    name: str
    f: Callable
    d1: Callable
    d2: Callable
    d3: Callable
    bounded: bool = False
    growth: int | None = None
    sup_d2: float = math.inf

    def __call__(self, x):
        return self.f(x)

    def derivative(self, n: int):
        return (self.f, self.d1, self.d2, self.d3)[n]


def _poly(coeffs) -> Phi:
    c = np.asarray(coeffs, dtype=float)
    ds = [c]
    for _ in range(3):
        ds.append(P.polyder(ds[-1]) if ds[-1].size > 1 else np.zeros(1))
    fns = [lambda x, a=a: P.polyval(x, a) for a in ds]
    deg = int(np.max(np.nonzero(c)[0])) if np.any(c) else 0
    sup2 = float(abs(ds[2][0])) if ds[2].size == 1 else math.inf
    name = "poly:" + ",".join(repr(float(v)) for v in c)
    return Phi(name, *fns, bounded=deg == 0, growth=deg, sup_d2=sup2)


def make_phi(spec: str) -> Phi:
    """Build phi from 'cos', 'sin', 'cos:<w>', 'identity', 'square' or 'poly:c0,c1,...'."""
    head, _, arg = spec.partition(":")
    if head in ("cos", "sin"):
        w = float(arg) if arg else 1.0
        if head == "cos":
            fs = (lambda x: np.cos(w * x), lambda x: -w * np.sin(w * x),
                  lambda x: -w * w * np.cos(w * x), lambda x: w**3 * np.sin(w * x))
        else:
            fs = (lambda x: np.sin(w * x), lambda x: w * np.cos(w * x),
                  lambda x: -w * w * np.sin(w * x), lambda x: -(w**3) * np.cos(w * x))
        return Phi(spec, *fs, bounded=True, growth=0, sup_d2=w * w)
    if head == "identity":
        return _poly([0.0, 1.0])
    if head == "square":
        return _poly([0.0, 0.0, 1.0])
    if head == "poly":
        return _poly([float(v) for v in arg.split(",")])
    raise ValueError(f"unknown test function {spec!r}")


@dataclass(frozen=True)
class Drift:
    """Lipschitz drift b with constant C (|b(x)-b(y)| <= C|x-y|)."""

    name: str
    b: Callable
    C: float
    linear_rate: float | None = None  # a when b(y) = a*y

    def __call__(self, y):
        return self.b(y)

    def spot_check(self, n: int = 2000, seed: int = 0, scale: float = 10.0) -> float:
        """Largest observed difference quotient divided by C (should be <= 1)."""
        rng = np.random.default_rng(seed)
        x = rng.normal(scale=scale, size=n)
        y = x + rng.normal(scale=rng.choice([1e-3, 1.0, scale], size=n))
        q = np.abs(self.b(x) - self.b(y)) / np.maximum(np.abs(x - y), 1e-300)
        return float(q.max() / self.C) if self.C > 0 else float(q.max())


DRIFTS: dict[str, Callable[[str], Drift]] = {}


def register_drift(name: str):
    def deco(fn):
        DRIFTS[name] = fn
        return fn
    return deco


@register_drift("zero")
def _zero(arg: str) -> Drift:
    return Drift("zero", lambda y: np.zeros_like(y), 0.0, linear_rate=0.0)


@register_drift("linear")
def _linear(arg: str) -> Drift:
    a = float(arg) if arg else 1.0
    return Drift(f"linear:{a!r}", lambda y: a * y, abs(a), linear_rate=a)


@register_drift("id")
def _identity(arg: str) -> Drift:
    return _linear("1.0")


@register_drift("tanh")
def _tanh(arg: str) -> Drift:
    a = float(arg) if arg else 1.0
    return Drift(f"tanh:{a!r}", lambda y: a * np.tanh(y), abs(a))


@register_drift("sin")
def _sin(arg: str) -> Drift:
    a = float(arg) if arg else 1.0
    return Drift(f"sin:{a!r}", lambda y: a * np.sin(y), abs(a))


def make_drift(spec: str) -> Drift:
    head, _, arg = spec.partition(":")
    if head not in DRIFTS:
        raise ValueError(f"unknown drift {spec!r}; known: {sorted(DRIFTS)}")
    return DRIFTS[head](arg)

