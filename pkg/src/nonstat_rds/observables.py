"""Bounded test functions ``phi`` on the phase spaces."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import FiniteSet, Interval, is_periodic


def _domain_ends(space):
    if isinstance(space, Interval):
        return space.lo, space.hi
    if is_periodic(space):
        return 0.0, space.period
    return 0.0, float(len(space.labels) - 1)


@dataclass(frozen=True)
class AffineObs:
    c0: float
    c1: float

    def __call__(self, x):
        return self.c0 + self.c1 * np.asarray(x, dtype=float)

    def sup_abs(self, space) -> float:
        lo, hi = _domain_ends(space)
        return max(abs(self.c0 + self.c1 * lo), abs(self.c0 + self.c1 * hi))


@dataclass(frozen=True)
class Poly:
    """``sum_k coeffs[k] * x**k``."""

    coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if not self.coeffs:
            raise ValueError("polynomial needs at least one coefficient")

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coeffs)

    def sup_abs(self, space) -> float:
        lo, hi = _domain_ends(space)
        pts = [lo, hi]
        if len(self.coeffs) > 2:
            crit = np.polynomial.polynomial.polyroots(np.polynomial.polynomial.polyder(self.coeffs))
            pts += [r.real for r in np.atleast_1d(crit) if abs(r.imag) < 1e-12 and lo <= r.real <= hi]
        return float(np.max(np.abs(self(np.array(pts)))))


@dataclass(frozen=True)
class CosK:
    """``cos(2 pi k x / period)``."""

    k: int
    period: float = 1.0

    def __call__(self, x):
        return np.cos(2.0 * math.pi * self.k * np.asarray(x, dtype=float) / self.period)

    def sup_abs(self, space) -> float:
        return 1.0


@dataclass(frozen=True)
class Indicator:
    """Indicator of a closed arc (from ``lo`` counterclockwise to ``hi``) or interval."""

    lo: float
    hi: float
    period: float | None = None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.period is None:
            return ((x >= self.lo) & (x <= self.hi)).astype(float)
        return (np.mod(x - self.lo, self.period) <= np.mod(self.hi - self.lo, self.period)).astype(float)

    def sup_abs(self, space) -> float:
        return 1.0


@dataclass(frozen=True)
class Table:
    """Values on the points of a finite set, by label index."""

    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __call__(self, x):
        return np.asarray(self.values)[np.asarray(x).astype(int)]

    def sup_abs(self, space) -> float:
        if isinstance(space, FiniteSet) and len(space.labels) != len(self.values):
            raise ValueError("table size does not match the finite set")
        return max(abs(v) for v in self.values)


Observable = AffineObs | Poly | CosK | Indicator | Table


def is_constant(phi, space) -> bool:
    if isinstance(phi, AffineObs):
        return phi.c1 == 0
    if isinstance(phi, Poly):
        return all(c == 0 for c in phi.coeffs[1:])
    if isinstance(phi, CosK):
        return phi.k == 0
    if isinstance(phi, Table):
        return len(set(phi.values)) == 1
    return False


def bound(phi, space) -> float:
    """``M = max(1, sup |phi|)``."""
    return max(1.0, float(phi.sup_abs(space)))
