"""Map families and step distributions.

A step distribution (:class:`MapDistribution`) is a finite list of
``(map, probability)`` atoms acting on one phase space.  A
:class:`MuSequence` yields the distribution used at step ``n = 1, 2, ...``.
"""

from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .measures import (
    POSITION_TOL,
    Circle,
    FiniteSet,
    Interval,
    ProjectiveLine,
    is_periodic,
    wrap,
)

PROB_TOL = 1e-12
DET_TOL = 1e-10


class NotInvertible(ValueError):
    def __init__(self, msg: str = "not invertible"):
        super().__init__(msg)


# ---------------------------------------------------------------------------
# SL(2, R)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Mat2:
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if abs(self.det - 1.0) > DET_TOL:
            raise ValueError(f"matrix is not in SL(2,R): det = {self.det!r}")

    @classmethod
    def from_array(cls, m) -> "Mat2":
        m = np.asarray(m, dtype=float)
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    @classmethod
    def rotation(cls, t: float) -> "Mat2":
        c, s = math.cos(t), math.sin(t)
        return cls(c, -s, s, c)

    @classmethod
    def diag(cls, s: float) -> "Mat2":
        return cls(s, 0.0, 0.0, 1.0 / s)

    @classmethod
    def identity(cls) -> "Mat2":
        return cls(1.0, 0.0, 0.0, 1.0)

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    @property
    def array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    def __matmul__(self, other: "Mat2") -> "Mat2":
        return Mat2.from_array(self.array @ other.array)

    def inv(self) -> "Mat2":
        return Mat2(self.d, -self.b, -self.c, self.a)

    def norm(self) -> float:
        return float(np.linalg.norm(self.array, 2))

    def is_scalar(self, tol: float = 1e-12) -> bool:
        """True for +-identity, i.e. the identity of RP^1."""
        return abs(self.b) <= tol and abs(self.c) <= tol and abs(self.a - self.d) <= tol

    def eigen_directions(self) -> list[float]:
        """Angles in [0, pi) of the real eigenvectors (empty if elliptic)."""
        if self.is_scalar():
            return []
        tr = self.a + self.d
        disc = tr * tr - 4.0
        if disc < -1e-14:
            return []
        disc = max(disc, 0.0)
        out = []
        for lam in {(tr + math.sqrt(disc)) / 2, (tr - math.sqrt(disc)) / 2}:
            # (A - lam) v = 0; pick the better-conditioned row
            r1 = (self.a - lam, self.b)
            r2 = (self.c, self.d - lam)
            r = r1 if abs(r1[0]) + abs(r1[1]) >= abs(r2[0]) + abs(r2[1]) else r2
            vx, vy = -r[1], r[0]
            out.append(float(wrap(math.atan2(vy, vx), math.pi)))
        return sorted(set(out))


def projective_action(m: np.ndarray, theta):
    """Angle of ``m @ (cos t, sin t)`` reduced into [0, pi)."""
    c, s = np.cos(theta), np.sin(theta)
    return wrap(np.arctan2(m[1, 0] * c + m[1, 1] * s, m[0, 0] * c + m[0, 1] * s), math.pi)


@dataclass
class ScaledProduct:
    """Running product ``A_n ... A_1`` stored as ``exp(log_scale) * matrix``.

    ``matrix`` is renormalised to unit max-entry after each factor, so long
    products never overflow; ``log_norm`` tracks ``log ||A_n ... A_1||``.
    ``log_det`` accumulates the factors' determinants: recomputing it from the
    normalised matrix loses everything once the product is strongly
    hyperbolic (the small singular value underflows).
    """

    matrix: np.ndarray = field(default_factory=lambda: np.eye(2))
    log_scale: float = 0.0
    log_det: float = 0.0

    def left_multiply(self, m: Mat2 | np.ndarray) -> "ScaledProduct":
        arr = m.array if isinstance(m, Mat2) else np.asarray(m, dtype=float)
        prod = arr @ self.matrix
        s = float(np.abs(prod).max())
        self.matrix = prod / s
        self.log_scale += math.log(s)
        self.log_det += math.log(abs(arr[0, 0] * arr[1, 1] - arr[0, 1] * arr[1, 0]))
        return self

    @property
    def log_norm(self) -> float:
        return self.log_scale + math.log(np.linalg.norm(self.matrix, 2))

    def direct_log_det(self) -> float:
        """``log|det|`` recomputed from the stored matrix (meaningful for well-conditioned products)."""
        return math.log(abs(np.linalg.det(self.matrix))) + 2.0 * self.log_scale


# ---------------------------------------------------------------------------
# maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Affine:
    """``x -> a x + b`` on an interval."""

    a: float
    b: float

    def apply(self, x, space):
        return space.reduce(self.a * np.asarray(x, dtype=float) + self.b)

    def inverse(self):
        if self.a == 0:
            raise NotInvertible()
        return Affine(1.0 / self.a, -self.b / self.a)

    def lipschitz(self, space) -> float:
        return abs(self.a)

    def check(self, space):
        if not isinstance(space, Interval):
            raise ValueError("affine maps act on an interval")
        ends = self.a * np.array([space.lo, space.hi]) + self.b
        if np.any(ends < space.lo - POSITION_TOL) or np.any(ends > space.hi + POSITION_TOL):
            raise ValueError(f"affine map {self} does not preserve {space}")

    def to_json(self) -> dict:
        return {"type": "affine", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Moebius:
    """Projective action of an SL(2,R) matrix on RP^1."""

    m: Mat2

    def apply(self, x, space):
        return projective_action(self.m.array, np.asarray(x, dtype=float))

    def inverse(self):
        return Moebius(self.m.inv())

    def lipschitz(self, space) -> float:
        # derivative of the action is 1/|A v|^2, maximal at the most contracted v
        return self.m.norm() ** 2

    def check(self, space):
        if not isinstance(space, ProjectiveLine):
            raise ValueError("Moebius maps act on the projective line")

    def to_json(self) -> dict:
        return {"type": "moebius", "m": self.m.array.tolist()}


@dataclass(frozen=True)
class Permutation:
    """Bijection of a finite set given by its index table."""

    table: tuple

    def __post_init__(self):
        object.__setattr__(self, "table", tuple(int(t) for t in self.table))
        if sorted(self.table) != list(range(len(self.table))):
            raise ValueError("permutation table is not a bijection")

    def apply(self, x, space):
        return np.asarray(self.table, dtype=float)[np.asarray(x).astype(int)]

    def inverse(self):
        inv = [0] * len(self.table)
        for i, t in enumerate(self.table):
            inv[t] = i
        return Permutation(tuple(inv))

    def lipschitz(self, space) -> float:
        d = space.matrix
        t = np.asarray(self.table)
        off = ~np.eye(len(t), dtype=bool)
        return float(np.max(d[t][:, t][off] / d[off])) if len(t) > 1 else 1.0

    def check(self, space):
        if not isinstance(space, FiniteSet) or len(self.table) != len(space.labels):
            raise ValueError("permutation size does not match the finite set")

    def to_json(self) -> dict:
        return {"type": "permutation", "table": list(self.table)}


@dataclass(frozen=True)
class Rotation:
    """``x -> x + alpha`` on a circle (mod its period)."""

    alpha: float

    def apply(self, x, space):
        return wrap(np.asarray(x, dtype=float) + self.alpha, space.period)

    def inverse(self):
        return Rotation(-self.alpha)

    def lipschitz(self, space) -> float:
        return 1.0

    def check(self, space):
        if not is_periodic(space):
            raise ValueError("rotations act on a circle or the projective line")

    def to_json(self) -> dict:
        return {"type": "rotation", "alpha": self.alpha}


Map = Affine | Moebius | Permutation | Rotation


@dataclass(frozen=True)
class MapAtom:
    map: Map
    prob: float

    def __post_init__(self):
        if not (self.prob >= 0 and math.isfinite(self.prob)):
            raise ValueError(f"atom probability must be >= 0, got {self.prob!r}")


def apply_map(atom: MapAtom | Map, x, space=None):
    """Image of ``x`` under the atom's map; ``space`` defaults to the natural one."""
    f = atom.map if isinstance(atom, MapAtom) else atom
    if space is None:
        space = _natural_space(f)
    out = f.apply(x, space)
    return float(out) if np.ndim(x) == 0 else out


def _natural_space(f):
    if isinstance(f, Affine):
        return Interval(0.0, 1.0)
    if isinstance(f, Moebius):
        return ProjectiveLine()
    if isinstance(f, Rotation):
        return Circle()
    return FiniteSet.discrete(tuple(range(len(f.table))))


@dataclass(frozen=True, eq=False)
class MapDistribution:
    """One step's law ``mu_n``: finitely many maps with probabilities."""

    space: object
    atoms: tuple

    def __post_init__(self):
        atoms = tuple(self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not atoms:
            raise ValueError("distribution needs at least one atom")
        total = math.fsum(a.prob for a in atoms)
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"atom probabilities sum to {total!r}, expected 1")
        for a in atoms:
            a.map.check(self.space)
        probs = np.array([a.prob for a in atoms])
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "cumprobs", np.cumsum(probs))
        affine = None
        if all(isinstance(a.map, Affine) for a in atoms):
            affine = (np.array([a.map.a for a in atoms]), np.array([a.map.b for a in atoms]))
        object.__setattr__(self, "_affine", affine)
        tables = None
        if all(isinstance(a.map, Permutation) for a in atoms):
            tables = np.array([a.map.table for a in atoms], dtype=float)
        object.__setattr__(self, "_tables", tables)

    @classmethod
    def of(cls, space, *pairs) -> "MapDistribution":
        """``MapDistribution.of(space, (f, p), (g, q), ...)``."""
        return cls(space, tuple(MapAtom(f, p) for f, p in pairs))

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def maps(self) -> list:
        return [a.map for a in self.atoms]

    def lipschitz(self) -> float:
        return max(a.map.lipschitz(self.space) for a in self.atoms)

    def inverse(self) -> "MapDistribution":
        return MapDistribution(self.space, tuple(MapAtom(a.map.inverse(), a.prob) for a in self.atoms))

    def choose(self, u) -> np.ndarray:
        """Inverse-CDF atom index for uniforms ``u`` (atoms in listed order)."""
        idx = np.searchsorted(self.cumprobs, u, side="right")
        return np.minimum(idx, len(self.atoms) - 1)

    def apply_indexed(self, idx, x) -> np.ndarray:
        """Apply atom ``idx[k]`` to ``x[k]`` for every ``k``."""
        x = np.asarray(x, dtype=float)
        if len(self.atoms) == 1:
            return self.atoms[0].map.apply(x, self.space)
        if self._affine is not None:
            a, b = self._affine
            return self.space.reduce(a[idx] * x + b[idx])
        if self._tables is not None:
            return self._tables[idx, x.astype(np.int64)]
        out = np.empty_like(x)
        for j, atom in enumerate(self.atoms):
            mask = idx == j
            if np.any(mask):
                out[mask] = atom.map.apply(x[mask], self.space)
        return out

    def to_json(self) -> list:
        return [dict(a.map.to_json(), p=a.prob) for a in self.atoms]


def identity_map(space) -> Map:
    if isinstance(space, Interval):
        return Affine(1.0, 0.0)
    if isinstance(space, ProjectiveLine):
        return Moebius(Mat2.identity())
    if isinstance(space, FiniteSet):
        return Permutation(tuple(range(len(space.labels))))
    return Rotation(0.0)


def identity_distribution(space) -> MapDistribution:
    return MapDistribution.of(space, (identity_map(space), 1.0))


def cantor_ifs(p: float = 0.5) -> MapDistribution:
    """``x/3`` with probability ``p`` and ``x/3 + 2/3`` otherwise; Lipschitz 1/3."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    pairs = [(Affine(1 / 3, 0.0), p), (Affine(1 / 3, 2 / 3), 1.0 - p)]
    return MapDistribution.of(Interval(0.0, 1.0), *[(f, q) for f, q in pairs if q > 0])


# ---------------------------------------------------------------------------
# sequences mu_1, mu_2, ...
# ---------------------------------------------------------------------------


class MuSequence:
    """Deterministic map from step index ``n >= 1`` to a :class:`MapDistribution`."""

    space: object

    def at(self, n: int) -> MapDistribution:  # pragma: no cover - abstract
        raise NotImplementedError

    def _check_index(self, n: int):
        if n < 1:
            raise IndexError("step indices start at 1")

    def table(self, start: int, stop: int):
        """Distinct distributions for steps ``start..stop`` and the per-step index into them."""
        dists: list[MapDistribution] = []
        ids = np.empty(max(stop - start + 1, 0), dtype=np.int64)
        seen: dict[int, int] = {}
        for k, n in enumerate(range(start, stop + 1)):
            d = self.at(n)
            if id(d) not in seen:
                seen[id(d)] = len(dists)
                dists.append(d)
            ids[k] = seen[id(d)]
        return dists, ids


@dataclass(frozen=True, eq=False)
class Constant(MuSequence):
    dist: MapDistribution

    @property
    def space(self):
        return self.dist.space

    def at(self, n: int) -> MapDistribution:
        self._check_index(n)
        return self.dist


@dataclass(frozen=True, eq=False)
class Periodic(MuSequence):
    dists: tuple

    def __post_init__(self):
        object.__setattr__(self, "dists", tuple(self.dists))
        if not self.dists:
            raise ValueError("periodic sequence needs at least one distribution")
        _same_space(self.dists)

    @property
    def space(self):
        return self.dists[0].space

    def at(self, n: int) -> MapDistribution:
        self._check_index(n)
        return self.dists[(n - 1) % len(self.dists)]


@dataclass(frozen=True, eq=False)
class Scripted(MuSequence):
    dists: tuple
    default: MapDistribution

    def __post_init__(self):
        object.__setattr__(self, "dists", tuple(self.dists))
        _same_space(self.dists + (self.default,))

    @property
    def space(self):
        return self.default.space

    def at(self, n: int) -> MapDistribution:
        self._check_index(n)
        return self.dists[n - 1] if n <= len(self.dists) else self.default


TWO_POINTS = FiniteSet.discrete(("a", "b"))


def sparse_schedule(kmax: int, base: int = 2) -> tuple:
    """Shuffle times ``base**(k*k)`` for ``k = 1..kmax``."""
    return tuple(base ** (k * k) for k in range(1, kmax + 1))


@dataclass(frozen=True, eq=False)
class TwoPointSparse(MuSequence):
    """Two-point system: identity, except at shuffle times where the swap fires with prob ``p``.

    ``shuffle_times=None`` shuffles at every step.
    """

    shuffle_times: tuple | None
    p: float = 0.5
    space: FiniteSet = TWO_POINTS

    def __post_init__(self):
        if self.shuffle_times is not None:
            times = tuple(int(t) for t in self.shuffle_times)
            if any(b <= a for a, b in zip(times, times[1:])) or (times and times[0] < 1):
                raise ValueError("shuffle_times must be strictly increasing positive integers")
            object.__setattr__(self, "shuffle_times", times)
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if len(self.space.labels) != 2:
            raise ValueError("two-point system needs a two-point space")
        ident = identity_distribution(self.space)
        swap = MapDistribution.of(
            self.space, (identity_map(self.space), 1.0 - self.p), (Permutation((1, 0)), self.p)
        )
        object.__setattr__(self, "_ident", ident)
        object.__setattr__(self, "_swap", swap)

    @classmethod
    def sparse(cls, kmax: int, p: float = 0.5) -> "TwoPointSparse":
        return cls(sparse_schedule(kmax), p)

    @classmethod
    def dense(cls, p: float = 0.5) -> "TwoPointSparse":
        return cls(None, p)

    def is_shuffle(self, n: int) -> bool:
        if self.shuffle_times is None:
            return True
        i = bisect.bisect_left(self.shuffle_times, n)
        return i < len(self.shuffle_times) and self.shuffle_times[i] == n

    def at(self, n: int) -> MapDistribution:
        self._check_index(n)
        return self._swap if self.is_shuffle(n) else self._ident


def _same_space(dists):
    spaces = {repr(d.space) for d in dists}
    if len(spaces) > 1:
        raise ValueError("all distributions of a sequence must act on the same space")


# ---------------------------------------------------------------------------
# measures condition: finite-support falsifier
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FalsifierVerdict:
    passed: bool
    reason: str = ""
    witness: tuple = ()

    def __str__(self) -> str:
        return "PASS_NECESSARY" if self.passed else f"FAIL({self.reason}: {self.witness})"


MAX_CANDIDATES = 50
_ANGLE_TOL = 1e-9


def _angle_close(x: float, y: float) -> bool:
    d = abs(x - y) % math.pi
    return min(d, math.pi - d) <= _ANGLE_TOL


def _set_close(xs, ys) -> bool:
    xs, ys = sorted(xs), sorted(ys)
    if len(xs) != len(ys):
        return False
    return any(all(_angle_close(a, b) for a, b in zip(xs, perm)) for perm in itertools.permutations(ys))


def _candidates(mats: Sequence[Mat2]) -> list[float]:
    cands: list[float] = []

    def add(angles):
        for t in angles:
            if len(cands) < MAX_CANDIDATES and not any(_angle_close(t, c) for c in cands):
                cands.append(t)

    for m in mats:
        add(m.eigen_directions())
    for i, j in itertools.permutations(range(len(mats)), 2):
        rel = mats[j].inv() @ mats[i]
        add(rel.eigen_directions())
        add((rel @ rel).eigen_directions())
    if not cands:
        add([0.0])
    return cands


def measures_condition_falsifier(dist: MapDistribution) -> FalsifierVerdict:
    """Look for atomic ``nu1, nu2`` (at most two atoms) with ``(f_A)_* nu1 = nu2`` for all atoms.

    A FAIL carries the witness and proves the measures condition is violated;
    PASS_NECESSARY only rules out these finite-support obstructions.
    """
    if not all(isinstance(a.map, Moebius) for a in dist.atoms):
        raise ValueError("falsifier needs Moebius atoms only")
    mats = [a.map.m for a in dist.atoms if a.prob > 0]
    if len(mats) == 1 or all(m.is_scalar() for m in mats):
        return FalsifierVerdict(False, "single projective map", (0.0,))
    # all atoms act identically on RP^1
    if all((mats[0].inv() @ m).is_scalar() for m in mats[1:]):
        return FalsifierVerdict(False, "single projective map", (0.0,))
    cands = _candidates(mats)

    def images(points):
        return [sorted(float(projective_action(m.array, t)) for t in points) for m in mats]

    for t in cands:
        imgs = images([t])
        if all(_angle_close(img[0], imgs[0][0]) for img in imgs):
            reason = "common fixed point" if _angle_close(t, imgs[0][0]) else "common image"
            return FalsifierVerdict(False, reason, (t, imgs[0][0]))
    for s, t in itertools.combinations(cands, 2):
        imgs = images([s, t])
        if all(_set_close(img, imgs[0]) for img in imgs):
            return FalsifierVerdict(False, "common two-point image", (s, t, *imgs[0]))
    return FalsifierVerdict(True)
