"""JSON scenario files (format ``nonstat-rds/1``).

A scenario file looks like::

    {
      "version": "nonstat-rds/1",
      "space": {"kind": "interval", "lo": 0, "hi": 1},
      "mu_sequence": {"kind": "constant",
                      "dist": [{"type": "affine", "a": 0.333, "b": 0, "p": 0.5}, ...]},
      "nu0": {"support": [0.5], "weights": [1]},
      "observable": {"kind": "affine", "c0": 0, "c1": 1},
      "horizon": 16384, "trials": 200, "seed": 12345, "epsilon": 0.1,
      "start_points": [0.5],
      "propagation": {"max_support": 4096, "prune": [{"kind": "truncate", "epsilon": 1e-9}]}
    }

Every problem is reported as :class:`ScenarioError` naming the offending
field path, e.g. ``mu_sequence.dist: probabilities sum to 0.9, not 1``.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

from .measures import Circle, DiscreteMeasure, FiniteSet, Interval, ProjectiveLine
from .models import (
    Affine,
    Constant,
    MapAtom,
    MapDistribution,
    Mat2,
    Moebius,
    Periodic,
    Permutation,
    Rotation,
    Scripted,
    TwoPointSparse,
    sparse_schedule,
)
from .observables import AffineObs, CosK, Indicator, Poly, Table
from .propagation import (
    MergeDuplicates,
    PropagationConfig,
    QuantizeMerge,
    SystematicResample,
    WeightTruncate,
)
from .simulate import Scenario

VERSION = "nonstat-rds/1"
TOP_KEYS = {
    "version", "space", "mu_sequence", "nu0", "observable", "horizon", "trials",
    "seed", "epsilon", "start_points", "propagation",
}
REQUIRED = {"version", "space", "mu_sequence", "nu0", "observable", "horizon", "trials"}


class ScenarioError(ValueError):
    def __init__(self, field: str, msg: str):
        self.field = field or "<top level>"
        super().__init__(f"{self.field}: {msg}")


def _obj(doc, field, allowed=None, required=()):
    if not isinstance(doc, dict):
        raise ScenarioError(field, "expected an object")
    if allowed is not None:
        extra = sorted(set(doc) - set(allowed))
        if extra:
            raise ScenarioError(field, f"unknown key(s) {', '.join(extra)}")
    for k in required:
        if k not in doc:
            raise ScenarioError(f"{field}.{k}" if field else k, "missing")
    return doc


def _num(doc, key, field, default=None):
    path = f"{field}.{key}" if field else key
    v = doc.get(key, default)
    if v is None:
        raise ScenarioError(path, "missing")
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ScenarioError(path, f"expected a finite number, got {v!r}")
    return float(v)


def _int(doc, key, field, default=None, lo=None):
    path = f"{field}.{key}" if field else key
    v = doc.get(key, default)
    if v is None:
        raise ScenarioError(path, "missing")
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioError(path, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ScenarioError(path, f"must be >= {lo}")
    return v


def _kind(doc, field):
    k = doc.get("kind")
    if not isinstance(k, str):
        raise ScenarioError(f"{field}.kind", "missing")
    return k


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------


def parse_space(doc, field="space"):
    _obj(doc, field)
    kind = _kind(doc, field)
    try:
        if kind == "interval":
            _obj(doc, field, {"kind", "lo", "hi"}, ("lo", "hi"))
            return Interval(_num(doc, "lo", field), _num(doc, "hi", field))
        if kind == "projective":
            _obj(doc, field, {"kind"})
            return ProjectiveLine()
        if kind == "circle":
            _obj(doc, field, {"kind"})
            return Circle()
        if kind == "finite":
            _obj(doc, field, {"kind", "labels", "metric"}, ("labels",))
            labels = tuple(doc["labels"])
            if "metric" in doc:
                return FiniteSet(labels, tuple(tuple(float(v) for v in row) for row in doc["metric"]))
            return FiniteSet.discrete(labels)
    except ScenarioError:
        raise
    except (ValueError, TypeError) as e:
        raise ScenarioError(field, str(e)) from None
    raise ScenarioError(f"{field}.kind", f"unknown space kind {kind!r}")


def _point(space, v, field):
    if isinstance(space, FiniteSet) and isinstance(v, str):
        try:
            return float(space.index(v))
        except ValueError:
            raise ScenarioError(field, f"unknown label {v!r}") from None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(field, f"expected a point, got {v!r}")
    return float(v)


def parse_map(doc, field):
    _obj(doc, field)
    t = doc.get("type")
    try:
        if t == "affine":
            _obj(doc, field, {"type", "a", "b", "p"}, ("a", "b"))
            return Affine(_num(doc, "a", field), _num(doc, "b", field))
        if t == "moebius":
            _obj(doc, field, {"type", "m", "p"}, ("m",))
            return Moebius(Mat2.from_array(doc["m"]))
        if t == "permutation":
            _obj(doc, field, {"type", "table", "p"}, ("table",))
            return Permutation(tuple(doc["table"]))
        if t == "rotation":
            _obj(doc, field, {"type", "alpha", "p"}, ("alpha",))
            return Rotation(_num(doc, "alpha", field))
    except ScenarioError:
        raise
    except (ValueError, TypeError) as e:
        raise ScenarioError(field, str(e)) from None
    raise ScenarioError(f"{field}.type", f"unknown map type {t!r}")


def parse_distribution(space, doc, field) -> MapDistribution:
    if not isinstance(doc, list) or not doc:
        raise ScenarioError(field, "expected a non-empty list of map atoms")
    atoms = []
    for i, a in enumerate(doc):
        f = f"{field}[{i}]"
        m = parse_map(a, f)
        p = _num(a, "p", f)
        if p < 0:
            raise ScenarioError(f"{f}.p", "probability must be >= 0")
        atoms.append(MapAtom(m, p))
    total = math.fsum(a.prob for a in atoms)
    if abs(total - 1.0) > 1e-12:
        raise ScenarioError(field, f"probabilities sum to {total:g}, not 1")
    try:
        return MapDistribution(space, tuple(atoms))
    except ValueError as e:
        raise ScenarioError(field, str(e)) from None


def parse_sequence(space, doc, field="mu_sequence"):
    _obj(doc, field)
    kind = _kind(doc, field)
    if kind == "constant":
        _obj(doc, field, {"kind", "dist"}, ("dist",))
        return Constant(parse_distribution(space, doc["dist"], f"{field}.dist"))
    if kind == "periodic":
        _obj(doc, field, {"kind", "dists"}, ("dists",))
        if not isinstance(doc["dists"], list) or not doc["dists"]:
            raise ScenarioError(f"{field}.dists", "expected a non-empty list")
        return Periodic(tuple(parse_distribution(space, d, f"{field}.dists[{i}]") for i, d in enumerate(doc["dists"])))
    if kind == "scripted":
        _obj(doc, field, {"kind", "dists", "default"}, ("dists", "default"))
        dists = tuple(parse_distribution(space, d, f"{field}.dists[{i}]") for i, d in enumerate(doc["dists"]))
        return Scripted(dists, parse_distribution(space, doc["default"], f"{field}.default"))
    if kind == "two_point_sparse":
        _obj(doc, field, {"kind", "shuffle_times", "kmax", "p"})
        if not isinstance(space, FiniteSet) or len(space.labels) != 2:
            raise ScenarioError("space", "two_point_sparse needs a two-point finite space")
        p = _num(doc, "p", field, 0.5)
        if "shuffle_times" in doc and "kmax" in doc:
            raise ScenarioError(field, "give shuffle_times or kmax, not both")
        if "kmax" in doc:
            times = sparse_schedule(_int(doc, "kmax", field, lo=1))
        elif "shuffle_times" in doc:
            times = doc["shuffle_times"]
            times = None if times == "all" else tuple(times)
        else:
            times = None
        try:
            return TwoPointSparse(times, p, space)
        except (ValueError, TypeError) as e:
            raise ScenarioError(field, str(e)) from None
    raise ScenarioError(f"{field}.kind", f"unknown sequence kind {kind!r}")


def parse_measure(space, doc, field="nu0") -> DiscreteMeasure:
    _obj(doc, field, {"support", "weights"}, ("support", "weights"))
    sup, w = doc["support"], doc["weights"]
    if not isinstance(sup, list) or not isinstance(w, list) or len(sup) != len(w) or not sup:
        raise ScenarioError(field, "support and weights must be non-empty lists of equal length")
    pts = [_point(space, v, f"{field}.support[{i}]") for i, v in enumerate(sup)]
    for i, v in enumerate(w):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v >= 0:
            raise ScenarioError(f"{field}.weights[{i}]", f"expected a non-negative number, got {v!r}")
    total = math.fsum(w)
    if abs(total - 1.0) > 1e-12:
        raise ScenarioError(f"{field}.weights", f"weights sum to {total:g}, not 1")
    try:
        return DiscreteMeasure(space, pts, w)
    except ValueError as e:
        raise ScenarioError(field, str(e)) from None


def parse_observable(doc, field="observable"):
    _obj(doc, field)
    kind = _kind(doc, field)
    try:
        if kind == "affine":
            _obj(doc, field, {"kind", "c0", "c1"}, ("c1",))
            return AffineObs(_num(doc, "c0", field, 0.0), _num(doc, "c1", field))
        if kind == "poly":
            _obj(doc, field, {"kind", "coeffs"}, ("coeffs",))
            return Poly(tuple(doc["coeffs"]))
        if kind == "cos":
            _obj(doc, field, {"kind", "k", "period"}, ("k",))
            return CosK(_int(doc, "k", field), _num(doc, "period", field, 1.0))
        if kind == "indicator":
            _obj(doc, field, {"kind", "lo", "hi", "period"}, ("lo", "hi"))
            period = doc.get("period")
            return Indicator(_num(doc, "lo", field), _num(doc, "hi", field), None if period is None else float(period))
        if kind == "table":
            _obj(doc, field, {"kind", "values"}, ("values",))
            return Table(tuple(doc["values"]))
    except ScenarioError:
        raise
    except (ValueError, TypeError) as e:
        raise ScenarioError(field, str(e)) from None
    raise ScenarioError(f"{field}.kind", f"unknown observable kind {kind!r}")


def parse_propagation(doc, field="propagation") -> PropagationConfig:
    _obj(doc, field, {"max_support", "prune"})
    modes = []
    for i, m in enumerate(doc.get("prune", [{"kind": "truncate", "epsilon": 1e-9}])):
        f = f"{field}.prune[{i}]"
        _obj(m, f)
        kind = _kind(m, f)
        try:
            if kind == "merge":
                _obj(m, f, {"kind"})
                modes.append(MergeDuplicates())
            elif kind == "truncate":
                _obj(m, f, {"kind", "epsilon"})
                modes.append(WeightTruncate(_num(m, "epsilon", f, 1e-9)))
            elif kind == "quantize":
                _obj(m, f, {"kind", "resolution"}, ("resolution",))
                modes.append(QuantizeMerge(_num(m, "resolution", f)))
            elif kind == "resample":
                _obj(m, f, {"kind", "n", "seed"}, ("n",))
                modes.append(SystematicResample(_int(m, "n", f), _int(m, "seed", f, 0)))
            else:
                raise ScenarioError(f"{f}.kind", f"unknown prune kind {kind!r}")
        except ScenarioError:
            raise
        except (ValueError, TypeError) as e:
            raise ScenarioError(f, str(e)) from None
    try:
        return PropagationConfig(_int(doc, "max_support", field, 4096), tuple(modes))
    except ValueError as e:
        raise ScenarioError(f"{field}.max_support", str(e)) from None


def parse_scenario(doc, seed_override: int | None = None) -> Scenario:
    """Build a :class:`Scenario`; ``seed_override`` wins over the file's seed."""
    _obj(doc, "", TOP_KEYS, sorted(REQUIRED))
    if doc["version"] != VERSION:
        raise ScenarioError("version", f"expected {VERSION!r}, got {doc['version']!r}")
    space = parse_space(doc["space"])
    seq = parse_sequence(space, doc["mu_sequence"])
    nu0 = parse_measure(space, doc["nu0"])
    phi = parse_observable(doc["observable"])
    horizon = _int(doc, "horizon", "", lo=1)
    trials = _int(doc, "trials", "", lo=1)
    epsilon = _num(doc, "epsilon", "", 0.1)
    if not epsilon > 0:
        raise ScenarioError("epsilon", "must be > 0")
    if seed_override is not None:
        seed = seed_override
    elif "seed" in doc:
        seed = _int(doc, "seed", "", lo=0)
    else:
        raise ScenarioError("seed", "no seed in the file and none given with --seed")
    if not 0 <= seed < 2**64:
        raise ScenarioError("seed", "must be a 64-bit unsigned integer")
    starts = doc.get("start_points", [])
    if not isinstance(starts, list):
        raise ScenarioError("start_points", "expected a list")
    starts = tuple(_point(space, v, f"start_points[{i}]") for i, v in enumerate(starts))
    if starts and not all(space.contains(s) for s in starts):
        raise ScenarioError("start_points", "start point outside the phase space")
    cfg = parse_propagation(doc.get("propagation", {}))
    try:
        phi.sup_abs(space)
    except ValueError as e:
        raise ScenarioError("observable", str(e)) from None
    try:
        return Scenario(space, seq, nu0, phi, horizon, trials, seed, epsilon, starts, cfg)
    except ValueError as e:
        raise ScenarioError("scenario", str(e)) from None


def load_json(path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"line {e.lineno}", f"invalid JSON: {e.msg}") from None


def load_scenario(path, seed_override: int | None = None) -> Scenario:
    return parse_scenario(load_json(path), seed_override)


def scenario_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_measure(path) -> DiscreteMeasure:
    """Measure file: ``{"version", "space", "support", "weights"}``."""
    doc = load_json(path)
    _obj(doc, "", {"version", "space", "support", "weights"}, ("version", "space", "support", "weights"))
    if doc["version"] != VERSION:
        raise ScenarioError("version", f"expected {VERSION!r}, got {doc['version']!r}")
    space = parse_space(doc["space"])
    return parse_measure(space, {"support": doc["support"], "weights": doc["weights"]}, "")


# ---------------------------------------------------------------------------
# encoding (used to embed observables and sequences in reports)
# ---------------------------------------------------------------------------


def observable_to_json(phi) -> dict:
    if isinstance(phi, AffineObs):
        return {"kind": "affine", "c0": phi.c0, "c1": phi.c1}
    if isinstance(phi, Poly):
        return {"kind": "poly", "coeffs": list(phi.coeffs)}
    if isinstance(phi, CosK):
        return {"kind": "cos", "k": phi.k, "period": phi.period}
    if isinstance(phi, Indicator):
        return {"kind": "indicator", "lo": phi.lo, "hi": phi.hi, "period": phi.period}
    if isinstance(phi, Table):
        return {"kind": "table", "values": list(phi.values)}
    raise TypeError(f"cannot encode observable {phi!r}")


def space_to_json(space) -> dict:
    if isinstance(space, Interval):
        return {"kind": "interval", "lo": space.lo, "hi": space.hi}
    if isinstance(space, ProjectiveLine):
        return {"kind": "projective"}
    if isinstance(space, Circle):
        return {"kind": "circle"}
    return {"kind": "finite", "labels": list(space.labels), "metric": [list(r) for r in space.metric]}


def sequence_to_json(seq) -> dict:
    if isinstance(seq, Constant):
        return {"kind": "constant", "dist": seq.dist.to_json()}
    if isinstance(seq, Periodic):
        return {"kind": "periodic", "dists": [d.to_json() for d in seq.dists]}
    if isinstance(seq, Scripted):
        return {"kind": "scripted", "dists": [d.to_json() for d in seq.dists], "default": seq.default.to_json()}
    if isinstance(seq, TwoPointSparse):
        times = "all" if seq.shuffle_times is None else list(seq.shuffle_times)
        return {"kind": "two_point_sparse", "shuffle_times": times, "p": seq.p}
    raise TypeError(f"cannot encode sequence {seq!r}")
