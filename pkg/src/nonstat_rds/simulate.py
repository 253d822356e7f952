"""Random orbits, ergodic deviations and their large-deviation decay.

The ergodic deviation of an orbit ``x_0, x_1, ...`` is

    D_n = (1/n) | sum_{k=1}^n phi(x_k) - sum_{k=1}^n int phi d nu_k |,

with ``nu_k`` the deterministic sequence from :mod:`propagation`.  The
start point ``x_0`` is excluded from both sums.

Randomness: the map at step ``n`` of trial ``t`` is chosen by inverse-CDF
sampling with the uniform ``rng.uniforms(trial_key(seed, t), n)``, so every
trial is an independent stream and results do not depend on how trials are
batched or scheduled.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as rng_mod
from .measures import DiscreteMeasure
from .models import MuSequence
from .observables import bound
from .propagation import PropagationConfig, propagate

CHUNK = 256
CHUNK_CELLS = 1 << 22  # trials x horizon cells held in memory at once
MIN_EXCEED = 5


class CensoredFit(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Scenario:
    space: object
    seq: MuSequence
    nu0: DiscreteMeasure
    observable: object
    horizon: int
    trials: int
    seed: int
    epsilon: float = 0.1
    start_points: tuple = ()
    propagation: PropagationConfig = field(default_factory=PropagationConfig)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        rng_mod.check_seed(self.seed)
        if self.nu0.space != self.space or self.seq.space != self.space:
            raise ValueError("space mismatch")
        pts = tuple(float(p) for p in self.start_points) or (float(self.nu0.support[0]),)
        if not np.all(self.space.contains(np.array(pts))):
            raise ValueError("start point outside the phase space")
        object.__setattr__(self, "start_points", pts)
        if not math.isfinite(self.M):
            raise ValueError("observable must be bounded")

    @property
    def M(self) -> float:
        return bound(self.observable, self.space)

    def start_of(self, trial: int) -> float:
        return self.start_points[trial % len(self.start_points)]

    def with_(self, **changes) -> "Scenario":
        from dataclasses import replace

        return replace(self, **changes)


def default_n_grid(horizon: int) -> list[int]:
    """Dyadic grid ``2^6 .. 2^floor(log2 horizon)`` (from ``2^0`` for short horizons)."""
    top = int(math.floor(math.log2(horizon)))
    lo = 6 if top >= 6 else 0
    return [2**j for j in range(lo, top + 1)]


def scenario_nus(sc: Scenario, stats=None) -> list[DiscreteMeasure]:
    return propagate(sc.seq, sc.nu0, sc.horizon, sc.propagation, stats=stats)


def nu_means(sc: Scenario, nus) -> np.ndarray:
    """``int phi d nu_k`` for ``k = 0..len(nus)-1``, exact weighted sums."""
    return np.array([nu.integrate(sc.observable) for nu in nus])


# ---------------------------------------------------------------------------
# orbits
# ---------------------------------------------------------------------------


def run_orbits(seq: MuSequence, x0, keys, horizon: int) -> np.ndarray:
    """Orbits ``(len(keys), horizon + 1)``; row ``r`` starts at ``x0[r]`` and uses stream ``keys[r]``."""
    keys = np.asarray(keys, dtype=np.uint64)
    x = np.broadcast_to(np.asarray(x0, dtype=float), keys.shape).copy()
    out = np.empty((keys.size, horizon + 1))
    out[:, 0] = x
    if horizon == 0:
        return out
    dists, ids = seq.table(1, horizon)
    steps = np.arange(1, horizon + 1, dtype=np.uint64)
    idx = np.zeros((keys.size, horizon), dtype=np.int64)
    for d_id, d in enumerate(dists):
        cols = np.flatnonzero(ids == d_id)
        if len(d) > 1 and cols.size:
            idx[:, cols] = d.choose(rng_mod.uniforms(keys[:, None], steps[cols][None, :]))
    for n in range(1, horizon + 1):
        d = dists[ids[n - 1]]
        x = d.apply_indexed(idx[:, n - 1], x)
        out[:, n] = x
    return out


def simulate_orbit(sc: Scenario, x0: float, trial: int = 0) -> np.ndarray:
    """``[x_0, ..., x_horizon]`` for one trial (stream ``hash(seed, trial)``)."""
    if not np.all(sc.space.contains(x0)):
        raise ValueError("start point outside the phase space")
    return run_orbits(sc.seq, [x0], rng_mod.trial_keys(sc.seed, [trial]), sc.horizon)[0]


def ergodic_deviation(sc: Scenario, nus, orbit) -> np.ndarray:
    """``D_n`` for ``n = 1..horizon``; ``orbit`` may be one orbit or a stack of them."""
    orbit = np.asarray(orbit, dtype=float)
    if orbit.shape[-1] != len(nus):
        raise ValueError("length mismatch between orbit and measure sequence")
    means = nu_means(sc, nus)[1:] if not isinstance(nus, np.ndarray) else nus[1:]
    diff = sc.observable(orbit[..., 1:]) - means
    n = np.arange(1, orbit.shape[-1])
    return np.abs(np.cumsum(diff, axis=-1)) / n


# ---------------------------------------------------------------------------
# deviation statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DeviationSeries:
    n_grid: np.ndarray
    values: np.ndarray  # trials x len(n_grid)
    trial_ids: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def quantile(self, q: float) -> np.ndarray:
        return np.quantile(self.values, q, axis=0)

    @property
    def median(self) -> np.ndarray:
        return self.quantile(0.5)

    def exceed_count(self, epsilon: float) -> np.ndarray:
        return (self.values > epsilon).sum(axis=0)

    def exceed_prob(self, epsilon: float) -> np.ndarray:
        return self.exceed_count(epsilon) / self.values.shape[0]

    def summary_rows(self, epsilon: float) -> list[dict]:
        q05, q50, q95 = (self.quantile(q) for q in (0.05, 0.5, 0.95))
        p = self.exceed_prob(epsilon)
        return [
            {
                "n": int(n),
                "mean_D": float(self.mean[k]),
                "q05": float(q05[k]),
                "q50": float(q50[k]),
                "q95": float(q95[k]),
                "exceed_prob": float(p[k]),
            }
            for k, n in enumerate(self.n_grid)
        ]


def chunk_size(horizon: int) -> int:
    return max(1, min(CHUNK, CHUNK_CELLS // (horizon + 1)))


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("NONSTAT_RDS_THREADS", "1") or 1)
    return max(1, int(threads))


def simulate_deviations(
    sc: Scenario,
    nus=None,
    n_grid=None,
    *,
    trials=None,
    threads: int | None = 1,
) -> DeviationSeries:
    """Per-trial ``D_n`` on ``n_grid`` for trials ``0..sc.trials-1`` (or the given ids)."""
    if nus is None:
        nus = scenario_nus(sc)
    means = nu_means(sc, nus) if not isinstance(nus, np.ndarray) else nus
    n_grid = np.asarray(default_n_grid(sc.horizon) if n_grid is None else n_grid, dtype=np.int64)
    if np.any(n_grid < 1) or np.any(n_grid > sc.horizon) or np.any(np.diff(n_grid) <= 0):
        raise ValueError("n_grid must be increasing within 1..horizon")
    trial_ids = np.arange(sc.trials) if trials is None else np.asarray(trials, dtype=np.int64)
    size = chunk_size(sc.horizon)
    chunks = [trial_ids[i : i + size] for i in range(0, trial_ids.size, size)]

    def work(ids):
        x0 = np.array([sc.start_of(int(t)) for t in ids])
        orbits = run_orbits(sc.seq, x0, rng_mod.trial_keys(sc.seed, ids), sc.horizon)
        return ergodic_deviation(sc, means, orbits)[:, n_grid - 1]

    nthreads = resolve_threads(threads)
    if nthreads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(nthreads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    values = np.vstack(parts) if parts else np.empty((0, n_grid.size))
    return DeviationSeries(n_grid, values, trial_ids)


# ---------------------------------------------------------------------------
# large deviations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LdFit:
    """Least-squares fit ``log P(D_n > eps) ~ intercept + slope * n``."""

    epsilon: float
    n_grid: np.ndarray
    trials: int
    counts: np.ndarray
    used: np.ndarray
    slope: float
    intercept: float
    slope_se: float

    @property
    def exceed_prob(self) -> np.ndarray:
        return self.counts / self.trials

    @property
    def log_exceed(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.where(self.counts > 0, np.log(self.exceed_prob), -np.inf)

    @property
    def decays(self) -> bool:
        return self.slope < 0 and abs(self.slope) > 2 * self.slope_se

    def zero_beyond(self, n: int) -> bool:
        return bool(np.all(self.counts[self.n_grid > n] == 0))

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "trials": self.trials,
            "n_grid": [int(n) for n in self.n_grid],
            "exceed_count": [int(c) for c in self.counts],
            "exceed_prob": [float(p) for p in self.exceed_prob],
            "used_in_fit": [bool(u) for u in self.used],
            "min_exceed_count": MIN_EXCEED,
            "slope": _num(self.slope),
            "intercept": _num(self.intercept),
            "slope_se": _num(self.slope_se),
            "decays": bool(self.decays),
        }


def _num(x: float):
    return float(x) if math.isfinite(x) else None


def fit_exceedance(n_grid, counts, trials: int, epsilon: float) -> LdFit:
    """Weighted least squares on ``log p_hat`` with delta-method variances ``(1-p)/count``."""
    n_grid = np.asarray(n_grid, dtype=float)
    counts = np.asarray(counts, dtype=np.int64)
    if not np.any(counts > 0):
        raise CensoredFit("no exceedances; increase trials or decrease epsilon")
    used = counts >= MIN_EXCEED
    slope = intercept = slope_se = float("nan")
    if used.sum() >= 2:
        p = counts[used] / trials
        y = np.log(p)
        w = counts[used] / np.maximum(1.0 - p, 1.0 / trials)
        X = np.column_stack([np.ones(used.sum()), n_grid[used]])
        cov = np.linalg.inv(X.T @ (w[:, None] * X))
        intercept, slope = cov @ (X.T @ (w * y))
        slope_se = math.sqrt(cov[1, 1])
        if used.sum() > 2:
            # inflate by the residual dispersion when it exceeds the binomial model
            resid = y - (intercept + slope * n_grid[used])
            chi2 = float(np.sum(w * resid**2)) / (used.sum() - 2)
            slope_se *= math.sqrt(max(1.0, chi2))
    return LdFit(
        epsilon, n_grid.astype(np.int64), trials, counts, used, float(slope), float(intercept), float(slope_se)
    )


def ld_estimate(sc: Scenario, nus=None, n_grid=None, *, series: DeviationSeries | None = None, threads=1) -> LdFit:
    """Empirical ``P(D_n > epsilon)`` on ``n_grid`` and its exponential-decay fit."""
    if sc.trials < 100:
        raise ValueError("ld_estimate needs at least 100 trials")
    if series is None:
        series = simulate_deviations(sc, nus, n_grid, threads=threads)
    return fit_exceedance(series.n_grid, series.exceed_count(sc.epsilon), series.values.shape[0], sc.epsilon)


# ---------------------------------------------------------------------------
# two-point contraction
# ---------------------------------------------------------------------------


def contraction_curve(seq: MuSequence, x: float, y: float, m_grid, trials: int, seed: int, epsilon: float):
    """``P(d(F_m x, F_m y) < epsilon)`` for each ``m`` in ``m_grid``; same random maps for both points."""
    m_grid = np.asarray(m_grid, dtype=np.int64)
    horizon = int(m_grid.max()) if m_grid.size else 0
    keys = rng_mod.trial_keys(seed, range(trials))
    both = run_orbits(seq, np.concatenate([np.full(trials, x), np.full(trials, y)]), np.concatenate([keys, keys]), horizon)
    d = seq.space.dist(both[:trials, m_grid], both[trials:, m_grid])
    return (d < epsilon).mean(axis=0)


def two_point_contraction(seq: MuSequence, x: float, y: float, m: int, trials: int, seed: int, epsilon: float) -> float:
    """Empirical probability that ``F = f_m o ... o f_1`` brings ``x`` and ``y`` within ``epsilon``."""
    return float(contraction_curve(seq, x, y, [m], trials, seed, epsilon)[0])


def first_reaching(m_grid, probs, level: float = 0.95):
    """Smallest grid ``m`` whose probability reaches ``level`` (None if none does)."""
    hits = np.flatnonzero(np.asarray(probs) >= level)
    return int(np.asarray(m_grid)[hits[0]]) if hits.size else None
