"""Deterministic measure sequences.

Forward: ``nu_n = mu_n * nu_{n-1}`` (law of ``f(x)``, ``f ~ mu_n``, ``x ~ nu_{n-1}``).
Backward: inverse measures ``nu^-_{i-1} = mu^-_i * nu^-_i`` started from a
discretised Lebesgue measure at time ``n``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rng_mod
from .measures import (
    DiscreteMeasure,
    FiniteSet,
    Interval,
    check_same_space,
    is_periodic,
    merge_atoms,
    wasserstein,
    wrap,
)
from .models import MapDistribution, MuSequence, NotInvertible


class SupportOverflow(RuntimeError):
    def __init__(self, msg: str = "support overflow"):
        super().__init__(msg)


# ---------------------------------------------------------------------------
# pruning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MergeDuplicates:
    """Only merge coincident atoms (always done before any other pruning)."""


@dataclass(frozen=True)
class WeightTruncate:
    epsilon: float = 1e-9

    def __post_init__(self):
        if not 0 < self.epsilon <= 1e-6:
            raise ValueError("truncation epsilon must lie in (0, 1e-6]")


@dataclass(frozen=True)
class QuantizeMerge:
    """Snap atoms to a grid of step ``resolution`` and merge; moves mass by at most ``resolution / 2``."""

    resolution: float

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("quantisation resolution must be positive")


@dataclass(frozen=True)
class SystematicResample:
    """Systematic resampling down to ``n`` equal atoms when the support exceeds ``n``."""

    n: int
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("resample size must be >= 1")
        rng_mod.check_seed(self.seed)


PruneMode = MergeDuplicates | WeightTruncate | QuantizeMerge | SystematicResample


@dataclass(frozen=True)
class PropagationConfig:
    max_support: int = 4096
    prune: tuple = (WeightTruncate(1e-9),)

    def __post_init__(self):
        prune = self.prune if isinstance(self.prune, tuple) else (self.prune,)
        object.__setattr__(self, "prune", prune)
        if self.max_support < 1:
            raise ValueError("max_support must be >= 1")


EXACT = PropagationConfig(max_support=1 << 20, prune=(MergeDuplicates(),))


@dataclass
class PruneStats:
    """Accumulated pruning error: removed mass and a W1 bound on the perturbation."""

    truncated_mass: float = 0.0
    transport_slack: float = 0.0
    steps: int = 0


def _truncate(x, w, eps, space, stats):
    keep = w >= eps
    if np.all(keep):
        return x, w
    if not np.any(keep):
        keep = w == w.max()
    dropped = float(w[~keep].sum())
    if stats is not None:
        stats.truncated_mass += dropped
        stats.transport_slack += space.diameter * dropped
    x, w = x[keep], w[keep]
    return x, w / w.sum()


def _quantize(x, w, h, space, stats):
    if isinstance(space, FiniteSet):
        return x, w
    if isinstance(space, Interval):
        q = space.lo + np.round((x - space.lo) / h) * h
        q = np.clip(q, space.lo, space.hi)
    else:
        q = wrap(np.round(x / h) * h, space.period)
    if stats is not None:
        stats.transport_slack += float(np.dot(w, space.dist(x, q)))
    return merge_atoms(space, q, w)


def _systematic(x, w, mode, step, space, stats):
    if x.size <= mode.n:
        return x, w
    u0 = float(rng_mod.uniforms(rng_mod.trial_key(mode.seed, step, rng_mod.AUX), [0])[0])
    levels = (u0 + np.arange(mode.n)) / mode.n
    cum = np.cumsum(w)
    idx = np.minimum(np.searchsorted(cum, levels * cum[-1], side="right"), x.size - 1)
    if stats is not None and not isinstance(space, FiniteSet):
        stats.transport_slack += space.diameter / mode.n
    return merge_atoms(space, x[idx], np.full(mode.n, 1.0 / mode.n))


def prune(space, x, w, cfg: PropagationConfig, step: int = 0, stats: PruneStats | None = None):
    x, w = merge_atoms(space, x, w)
    for mode in cfg.prune:
        if isinstance(mode, WeightTruncate):
            x, w = _truncate(x, w, mode.epsilon, space, stats)
        elif isinstance(mode, QuantizeMerge):
            x, w = _quantize(x, w, mode.resolution, space, stats)
        elif isinstance(mode, SystematicResample):
            x, w = _systematic(x, w, mode, step, space, stats)
    if x.size > cfg.max_support:
        raise SupportOverflow(f"support overflow: {x.size} atoms > cap {cfg.max_support}")
    if stats is not None:
        stats.steps += 1
    return x, w / w.sum()


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------


def pushforward(dist: MapDistribution, nu: DiscreteMeasure):
    """Unpruned atoms of ``dist * nu`` as ``(points, weights)``."""
    xs, ws = [], []
    for atom in dist.atoms:
        if atom.prob > 0:
            xs.append(atom.map.apply(nu.support, dist.space))
            ws.append(atom.prob * nu.weights)
    return np.concatenate(xs), np.concatenate(ws)


def convolve_step(
    mu: MapDistribution,
    nu: DiscreteMeasure,
    cfg: PropagationConfig = PropagationConfig(),
    *,
    step: int = 0,
    stats: PruneStats | None = None,
) -> DiscreteMeasure:
    """``mu * nu``: exact product measure, merged and pruned per ``cfg``."""
    if mu.space != nu.space:
        raise ValueError("space mismatch")
    x, w = pushforward(mu, nu)
    x, w = prune(nu.space, x, w, cfg, step, stats)
    return DiscreteMeasure(nu.space, x, w)


def propagate(
    seq: MuSequence,
    nu0: DiscreteMeasure,
    n: int,
    cfg: PropagationConfig = PropagationConfig(),
    *,
    offset: int = 0,
    stats: PruneStats | None = None,
) -> list[DiscreteMeasure]:
    """``[nu_0, ..., nu_n]`` where step ``k`` applies ``seq.at(offset + k)``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    out = [nu0]
    for k in range(1, n + 1):
        out.append(convolve_step(seq.at(offset + k), out[-1], cfg, step=offset + k, stats=stats))
    return out


def gap_profile(seq, n, m_max, nu, nu_prime, cfg=PropagationConfig(), stats=None) -> np.ndarray:
    """Standing-assumption gaps for ``m = 0..m_max`` after initial moment ``n``."""
    check_same_space(nu, nu_prime)
    a = propagate(seq, nu, m_max, cfg, offset=n, stats=stats)
    b = propagate(seq, nu_prime, m_max, cfg, offset=n, stats=stats)
    return np.array([wasserstein(p, q) for p, q in zip(a, b)])


def standing_assumption_gap(
    seq: MuSequence,
    n: int,
    m: int,
    nu: DiscreteMeasure,
    nu_prime: DiscreteMeasure,
    cfg: PropagationConfig = PropagationConfig(),
    stats: PruneStats | None = None,
) -> float:
    """``W(mu_{n+m} * ... * mu_{n+1} * nu, same * nu_prime)``."""
    check_same_space(nu, nu_prime)
    a = propagate(seq, nu, m, cfg, offset=n, stats=stats)[-1]
    b = propagate(seq, nu_prime, m, cfg, offset=n, stats=stats)[-1]
    return wasserstein(a, b)


# ---------------------------------------------------------------------------
# backward (inverse measures)
# ---------------------------------------------------------------------------


def lebesgue_grid(space, k: int = 512) -> DiscreteMeasure:
    """Equal weights on ``k`` cell midpoints (all labels on a finite set)."""
    if isinstance(space, FiniteSet):
        return DiscreteMeasure.uniform(space, np.arange(len(space.labels)))
    if isinstance(space, Interval):
        pts = space.lo + (np.arange(k) + 0.5) * space.diameter / k
    else:
        pts = (np.arange(k) + 0.5) * space.period / k
    return DiscreteMeasure.uniform(space, pts)


def inverse_distribution(dist: MapDistribution) -> MapDistribution:
    try:
        return dist.inverse()
    except (NotInvertible, ValueError) as exc:
        raise NotInvertible(f"not invertible: {exc}") from None


def backward_propagate(
    seq: MuSequence,
    n: int,
    cfg: PropagationConfig = EXACT,
    grid_size: int = 512,
) -> list[DiscreteMeasure]:
    """``[nu^-_0, ..., nu^-_n]`` with ``nu^-_n`` the Lebesgue grid."""
    if n < 0:
        raise ValueError("n must be >= 0")
    out = [lebesgue_grid(seq.space, grid_size)]
    for i in range(n, 0, -1):
        inv = inverse_distribution(seq.at(i))
        out.append(convolve_step(inv, out[-1], cfg, step=i))
    return out[::-1]


def arc_contains(space, arc, z) -> np.ndarray:
    """Closed arc from ``arc[0]`` counterclockwise to ``arc[1]`` (closed interval on an interval)."""
    x, y = arc
    z = np.asarray(z, dtype=float)
    if is_periodic(space):
        L = space.period
        return np.mod(z - x, L) <= np.mod(y - x, L) + 1e-15
    if isinstance(space, FiniteSet):
        return (z >= x) & (z <= y)
    return (z >= min(x, y)) & (z <= max(x, y))


def image_arc(f, arc, space):
    """Image arc of an orientation-preserving homeomorphism."""
    return (float(f.apply(arc[0], space)), float(f.apply(arc[1], space)))


def arc_mass(measure: DiscreteMeasure, arc) -> float:
    return measure.mass(arc_contains(measure.space, arc, measure.support))


def martingale_check(
    seq: MuSequence,
    i: int,
    n: int,
    interval,
    trials: int | None = None,
    seed: int = 0,
    *,
    backward: list[DiscreteMeasure] | None = None,
    cfg: PropagationConfig = EXACT,
    grid_size: int = 512,
):
    """``(lhs, rhs, se)`` for ``E_{f ~ mu_i} nu^-_i(f(J)) = nu^-_{i-1}(J)``.

    ``trials=None`` enumerates the atoms of ``mu_i`` exactly (``se = 0``);
    otherwise ``f`` is sampled ``trials`` times from the counter-based stream.
    """
    if not 1 <= i <= n:
        raise ValueError("need 1 <= i <= n")
    nus = backward if backward is not None else backward_propagate(seq, n, cfg, grid_size)
    dist = seq.at(i)
    space = dist.space
    values = np.array([arc_mass(nus[i], image_arc(a.map, interval, space)) for a in dist.atoms])
    rhs = arc_mass(nus[i - 1], interval)
    if trials is None:
        return float(np.dot(dist.probs, values)), rhs, 0.0
    u = rng_mod.uniforms(rng_mod.trial_key(seed, i, rng_mod.AUX), np.arange(trials))
    sample = values[dist.choose(u)]
    se = float(sample.std(ddof=1) / math.sqrt(trials)) if trials > 1 else float("inf")
    return float(sample.mean()), rhs, se


def martingale_branches(seq: MuSequence, i: int, n: int, interval, backward: list[DiscreteMeasure]):
    """Exhaustive ``E nu^-_n(F(J))`` over all branches ``F = f_n o ... o f_i``; returns ``(lhs, rhs)``."""
    if not 1 <= i <= n:
        raise ValueError("need 1 <= i <= n")
    space = seq.space
    dists = [seq.at(k) for k in range(i, n + 1)]
    lhs = 0.0
    for branch in itertools.product(*[range(len(d)) for d in dists]):
        prob = 1.0
        arc = interval
        for d, j in zip(dists, branch):
            prob *= d.atoms[j].prob
            arc = image_arc(d.atoms[j].map, arc, space)
        lhs += prob * arc_mass(backward[n], arc)
    return lhs, arc_mass(backward[i - 1], interval)


__all__ = [
    "EXACT",
    "MergeDuplicates",
    "PropagationConfig",
    "PruneStats",
    "QuantizeMerge",
    "SupportOverflow",
    "SystematicResample",
    "WeightTruncate",
    "arc_contains",
    "arc_mass",
    "backward_propagate",
    "convolve_step",
    "gap_profile",
    "lebesgue_grid",
    "martingale_branches",
    "martingale_check",
    "propagate",
    "prune",
    "standing_assumption_gap",
]
