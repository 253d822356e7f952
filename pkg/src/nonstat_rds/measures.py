"""Discrete probability measures on one-dimensional phase spaces.

Phase spaces are a closed interval, the projective line (angles in
``[0, pi)``), the circle ``R/Z`` and finite metric spaces.  Points are
stored as floats; on a finite set a point is the integer index of its label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

POSITION_TOL = 1e-12
MASS_TOL = 1e-12


class SpaceMismatch(ValueError):
    def __init__(self, msg: str = "space mismatch"):
        super().__init__(msg)


# ---------------------------------------------------------------------------
# phase spaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def diameter(self) -> float:
        return self.hi - self.lo

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.lo - POSITION_TOL) & (x <= self.hi + POSITION_TOL)

    def reduce(self, x):
        return np.clip(x, self.lo, self.hi)

    def dist(self, x, y):
        return np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))


@dataclass(frozen=True)
class _Periodic:
    """Shared behaviour of circles of circumference ``period``."""

    @property
    def period(self) -> float:  # pragma: no cover - overridden
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        return self.period / 2

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= 0.0) & (x < self.period)

    def reduce(self, x):
        return wrap(x, self.period)

    def dist(self, x, y):
        d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)) % self.period
        return np.minimum(d, self.period - d)


@dataclass(frozen=True)
class ProjectiveLine(_Periodic):
    """RP^1 as angles in [0, pi); geodesic metric, diameter pi/2."""

    @property
    def period(self) -> float:
        return math.pi


@dataclass(frozen=True)
class Circle(_Periodic):
    """R/Z, points in [0, 1)."""

    @property
    def period(self) -> float:
        return 1.0


@dataclass(frozen=True)
class FiniteSet:
    labels: tuple
    metric: tuple  # tuple of row tuples

    def __post_init__(self):
        k = len(self.labels)
        if k == 0:
            raise ValueError("finite set needs at least one label")
        if len(set(self.labels)) != k:
            raise ValueError("finite set labels must be distinct")
        d = np.asarray(self.metric, dtype=float)
        if d.shape != (k, k):
            raise ValueError(f"metric table must be {k}x{k}")
        if np.any(np.diag(d) != 0):
            raise ValueError("metric table needs a zero diagonal")
        if not np.array_equal(d, d.T):
            raise ValueError("metric table must be symmetric")
        if np.any(d < 0):
            raise ValueError("metric table must be nonnegative")
        # d[i,j] <= d[i,l] + d[l,j]
        if np.any(d[:, None, :] > d[:, :, None] + d[None, :, :] + 1e-12):
            raise ValueError("metric table violates the triangle inequality")

    @classmethod
    def discrete(cls, labels: Sequence) -> "FiniteSet":
        k = len(labels)
        rows = tuple(tuple(0.0 if i == j else 1.0 for j in range(k)) for i in range(k))
        return cls(tuple(labels), rows)

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.metric, dtype=float)

    @property
    def diameter(self) -> float:
        return float(self.matrix.max())

    def index(self, label) -> int:
        return self.labels.index(label)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x == np.round(x)) & (x >= 0) & (x < len(self.labels))

    def reduce(self, x):
        return np.asarray(x, dtype=float)

    def dist(self, x, y):
        i = np.asarray(x).astype(int)
        j = np.asarray(y).astype(int)
        return self.matrix[i, j]


PhaseSpace = Interval | ProjectiveLine | Circle | FiniteSet


def wrap(x, period: float):
    """Reduce ``x`` into ``[0, period)``; guards the ``-tiny % p == p`` case."""
    r = np.mod(x, period)
    return np.where(r >= period, 0.0, r) if isinstance(r, np.ndarray) else (0.0 if r >= period else r)


def is_periodic(space) -> bool:
    return isinstance(space, _Periodic)


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float).reshape(-1)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely supported probability measure ``sum_i w_i delta_{x_i}``.

    Support points need not be distinct; :meth:`canonical` sorts and merges.
    """

    space: PhaseSpace
    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "support", _frozen(self.support))
        object.__setattr__(self, "weights", _frozen(self.weights))
        if self.support.shape != self.weights.shape:
            raise ValueError("support and weights lengths differ")
        if self.support.size == 0:
            raise ValueError("empty measure")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite and nonnegative")
        total = float(np.sum(self.weights))
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"weights sum to {total!r}, expected 1")
        if not np.all(self.space.contains(self.support)):
            raise ValueError("support point outside the phase space")

    @classmethod
    def dirac(cls, space, x) -> "DiscreteMeasure":
        return cls(space, [x], [1.0])

    @classmethod
    def uniform(cls, space, points) -> "DiscreteMeasure":
        points = np.asarray(points, dtype=float)
        return cls(space, points, np.full(points.size, 1.0 / points.size))

    @classmethod
    def from_unnormalized(cls, space, support, weights) -> "DiscreteMeasure":
        weights = np.asarray(weights, dtype=float)
        return cls(space, support, weights / weights.sum())

    def __len__(self) -> int:
        return self.support.size

    def __repr__(self) -> str:
        pairs = ", ".join(f"{w:.6g}@{x:.6g}" for x, w in zip(self.support, self.weights))
        return f"DiscreteMeasure({type(self.space).__name__}: {pairs})"

    def canonical(self, tol: float = POSITION_TOL) -> "DiscreteMeasure":
        """Sorted support with atoms closer than ``tol`` merged (first position kept)."""
        return DiscreteMeasure(self.space, *merge_atoms(self.space, self.support, self.weights, tol))

    def integrate(self, fn: Callable) -> float:
        return float(np.dot(self.weights, fn(self.support)))

    def mass(self, mask) -> float:
        return float(np.sum(self.weights[np.asarray(mask, dtype=bool)]))

    def same_as(self, other: "DiscreteMeasure", tol: float = 1e-12) -> bool:
        if self.space != other.space:
            return False
        a, b = self.canonical(), other.canonical()
        return (
            len(a) == len(b)
            and np.allclose(a.support, b.support, atol=tol, rtol=0)
            and np.allclose(a.weights, b.weights, atol=tol, rtol=0)
        )


def merge_atoms(space, support, weights, tol: float = POSITION_TOL):
    """Sort atoms and merge runs whose consecutive gaps are ``<= tol``."""
    support = np.asarray(support, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(support, kind="stable")
    x, w = support[order], weights[order]
    if x.size > 1:
        start = np.concatenate(([True], np.diff(x) > tol))
        group = np.cumsum(start) - 1
        w = np.bincount(group, weights=w)
        x = x[start]
        if is_periodic(space) and x.size > 1 and x[0] + space.period - x[-1] <= tol:
            w[0] += w[-1]
            x, w = x[:-1], w[:-1]
    return x, w


def check_same_space(mu: DiscreteMeasure, nu: DiscreteMeasure, kind=None):
    if mu.space != nu.space:
        raise SpaceMismatch()
    if kind is not None and not isinstance(mu.space, kind):
        raise SpaceMismatch(f"space mismatch: expected {kind.__name__}, got {type(mu.space).__name__}")


# ---------------------------------------------------------------------------
# Wasserstein-1
# ---------------------------------------------------------------------------


def _cdf_steps(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Breakpoints ``t`` and the constant value of ``F_mu - F_nu`` on each ``[t_k, t_{k+1})``."""
    t = np.union1d(mu.support, nu.support)
    fmu = np.cumsum(np.bincount(np.searchsorted(t, mu.support), weights=mu.weights, minlength=t.size))
    fnu = np.cumsum(np.bincount(np.searchsorted(t, nu.support), weights=nu.weights, minlength=t.size))
    return t, fmu - fnu


def wasserstein_1d(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """W1 on an interval as the integral of ``|F_mu - F_nu|``."""
    check_same_space(mu, nu, Interval)
    t, g = _cdf_steps(mu, nu)
    return float(np.sum(np.abs(g[:-1]) * np.diff(t)))


def _weighted_median(values: np.ndarray, lengths: np.ndarray) -> float:
    # lowest value at which the cumulative length reaches half (ties -> smaller shift)
    order = np.argsort(values, kind="stable")
    v, l = values[order], lengths[order]
    cum = np.cumsum(l)
    k = int(np.searchsorted(cum, 0.5 * cum[-1] - 1e-15, side="left"))
    return float(v[min(k, v.size - 1)])


def circle_shift(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Optimal constant shift ``c`` of the CDF difference on a circle."""
    check_same_space(mu, nu)
    L = mu.space.period
    t, g = _cdf_steps(mu, nu)
    # pieces: [0, t0) carries 0, [t_k, t_{k+1}) carries g_k, [t_last, L) carries g_last (~0)
    edges = np.concatenate(([0.0], t, [L]))
    vals = np.concatenate(([0.0], g))
    return _weighted_median(vals, np.diff(edges))


def wasserstein_circle(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Exact W1 on a circle: ``min_c int |F_mu - F_nu - c|``."""
    if mu.space != nu.space or not is_periodic(mu.space):
        raise SpaceMismatch()
    L = mu.space.period
    t, g = _cdf_steps(mu, nu)
    edges = np.concatenate(([0.0], t, [L]))
    vals = np.concatenate(([0.0], g))
    lengths = np.diff(edges)
    c = _weighted_median(vals, lengths)
    return float(np.sum(lengths * np.abs(vals - c)))


def wasserstein(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Dispatch to the exact solver appropriate for the common phase space."""
    if mu.space != nu.space:
        raise SpaceMismatch()
    if isinstance(mu.space, Interval):
        return wasserstein_1d(mu, nu)
    if is_periodic(mu.space):
        return wasserstein_circle(mu, nu)
    from .transport import wasserstein_oracle

    return wasserstein_oracle(mu.canonical(), nu.canonical()).cost


# ---------------------------------------------------------------------------
# monotone quantile coupling
# ---------------------------------------------------------------------------


def _cdf_parts(rho: DiscreteMeasure, y):
    """``rho((-inf, y))`` and ``rho({y})`` for an array of ``y``."""
    cum = np.concatenate(([0.0], np.cumsum(rho.weights)))
    lo = np.searchsorted(rho.support, y - POSITION_TOL, side="left")
    hi = np.searchsorted(rho.support, y + POSITION_TOL, side="right")
    return cum[lo], cum[hi] - cum[lo]


def quantile_level(rho: DiscreteMeasure, y, z):
    """``rho((-inf, y)) + z * rho({y})``: uniform on [0,1] when ``(y, z) ~ rho x U``."""
    rho = rho.canonical()
    below, at = _cdf_parts(rho, np.asarray(y, dtype=float))
    return below + np.asarray(z, dtype=float) * at


def quantile_function(rho: DiscreteMeasure, s):
    """``sup{y : rho((-inf, y)) <= s}``, clamped to the last atom at ``s = 1``."""
    rho = rho.canonical()
    cum = np.cumsum(rho.weights)
    j = np.searchsorted(cum, np.asarray(s, dtype=float), side="right")
    return rho.support[np.minimum(j, rho.support.size - 1)]


def quantile_coupling(rho: DiscreteMeasure, rho_prime: DiscreteMeasure, y, z):
    """Transport ``y`` (with atom-dissolving auxiliary ``z``) from ``rho`` to ``rho_prime``.

    If ``y ~ rho`` and ``z ~ U[0, 1]`` independently, the output has law
    ``rho_prime`` and ``(y, output)`` is a W1-optimal coupling.
    Vectorised over ``y`` and ``z``; scalars in, scalar out.
    """
    check_same_space(rho, rho_prime, Interval)
    z_arr = np.asarray(z, dtype=float)
    if np.any((z_arr < 0) | (z_arr > 1)) or np.any(np.isnan(z_arr)):
        raise ValueError("z must lie in [0, 1]")
    out = quantile_function(rho_prime, quantile_level(rho, y, z_arr))
    if np.ndim(y) == 0 and np.ndim(z) == 0:
        return float(out)
    return out


def coupling_plan(rho: DiscreteMeasure, rho_prime: DiscreteMeasure) -> "TransportPlan":
    """Plan induced by the quantile coupling on the canonical supports."""
    a, b = rho.canonical(), rho_prime.canonical()
    ca, cb = np.cumsum(a.weights), np.cumsum(b.weights)
    levels = np.union1d(np.concatenate(([0.0], ca)), cb)
    levels = levels[(levels >= 0) & (levels <= ca[-1])]
    mids = 0.5 * (levels[:-1] + levels[1:])
    mass = np.diff(levels)
    i = np.minimum(np.searchsorted(ca, mids, side="right"), len(a) - 1)
    j = np.minimum(np.searchsorted(cb, mids, side="right"), len(b) - 1)
    plan = np.zeros((len(a), len(b)))
    np.add.at(plan, (i, j), mass)
    return TransportPlan(a, b, plan)


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------


def observable_bound(phi, space) -> float:
    """``M = max(1, sup |phi|)``; uses ``phi.sup_abs`` when available, else the support."""
    sup = phi.sup_abs(space) if hasattr(phi, "sup_abs") else None
    return max(1.0, float(sup)) if sup is not None else 1.0


def pushforward_observable(phi, mu: DiscreteMeasure, M: float | None = None) -> DiscreteMeasure:
    """Law of ``phi(x)`` for ``x ~ mu``, as a measure on ``[-M, M]``."""
    values = np.asarray(phi(mu.support), dtype=float) * np.ones_like(mu.support)
    if M is None:
        M = observable_bound(phi, mu.space) if hasattr(phi, "sup_abs") else max(1.0, float(np.max(np.abs(values))))
    if np.any(np.abs(values) > M + POSITION_TOL):
        raise ValueError(f"observable exceeds the declared bound M={M}")
    return DiscreteMeasure(Interval(-M, M), np.clip(values, -M, M), mu.weights)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Coupling matrix between two discrete measures together with its cost."""

    row_measure: DiscreteMeasure
    col_measure: DiscreteMeasure
    matrix: np.ndarray
    cost: float = field(default=float("nan"))

    def __post_init__(self):
        m = _frozen(self.matrix).reshape(len(self.row_measure), len(self.col_measure))
        object.__setattr__(self, "matrix", m)
        if np.any(m < -1e-12):
            raise ValueError("plan has negative entries")
        if not np.allclose(m.sum(axis=1), self.row_measure.weights, atol=1e-10, rtol=0):
            raise ValueError("row sums differ from the row measure")
        if not np.allclose(m.sum(axis=0), self.col_measure.weights, atol=1e-10, rtol=0):
            raise ValueError("column sums differ from the column measure")
        object.__setattr__(self, "cost", float(np.sum(m * self.cost_matrix())))

    def cost_matrix(self) -> np.ndarray:
        space = self.row_measure.space
        return space.dist(self.row_measure.support[:, None], self.col_measure.support[None, :])
