import copy
import json

import pytest

from nonstat_rds.measures import FiniteSet, ProjectiveLine
from nonstat_rds.models import Periodic, TwoPointSparse
from nonstat_rds.observables import AffineObs, CosK, Indicator, Poly, Table
from nonstat_rds.propagation import QuantizeMerge, WeightTruncate
from nonstat_rds.scenario import (
    ScenarioError,
    load_measure,
    load_scenario,
    observable_to_json,
    parse_observable,
    parse_scenario,
    parse_sequence,
    sequence_to_json,
)


@pytest.fixture
def cantor_doc(scenarios_dir):
    return json.loads((scenarios_dir / "cantor_periodic.json").read_text())


def test_golden_scenario_loads(scenarios_dir):
    sc = load_scenario(scenarios_dir / "cantor_periodic.json")
    assert isinstance(sc.seq, Periodic) and sc.horizon == 2**14 and sc.seed == 12345
    assert sc.propagation.prune == (QuantizeMerge(1e-5), WeightTruncate(1e-9))


def test_other_scenarios_load(scenarios_dir):
    sc = load_scenario(scenarios_dir / "two_point_sparse.json")
    assert isinstance(sc.seq, TwoPointSparse) and sc.seq.shuffle_times == (2, 16, 512, 65536)
    assert isinstance(sc.space, FiniteSet) and sc.start_points == (0.0,)
    assert isinstance(load_scenario(scenarios_dir / "sl2_pair.json").space, ProjectiveLine)


def test_seed_override(cantor_doc):
    assert parse_scenario(cantor_doc, seed_override=3).seed == 3
    del cantor_doc["seed"]
    with pytest.raises(ScenarioError, match="seed"):
        parse_scenario(cantor_doc)
    assert parse_scenario(cantor_doc, 4).seed == 4


def test_probabilities_error_names_field(cantor_doc):
    cantor_doc["mu_sequence"]["dists"][1][0]["p"] = 0.6
    with pytest.raises(ScenarioError) as e:
        parse_scenario(cantor_doc)
    assert e.value.field == "mu_sequence.dists[1]"
    assert "0.9" in str(e.value)


def test_nu0_weights_error_names_field(cantor_doc):
    cantor_doc["nu0"] = {"support": [0.1, 0.2], "weights": [0.5, 0.4]}
    with pytest.raises(ScenarioError, match="nu0.weights"):
        parse_scenario(cantor_doc)


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d.update(extra=1), "<top level>"),
        (lambda d: d.update(version="nonstat-rds/2"), "version"),
        (lambda d: d.update(horizon=0), "horizon"),
        (lambda d: d.update(trials=1.5), "trials"),
        (lambda d: d.update(epsilon=-1), "epsilon"),
        (lambda d: d["space"].update(kind="torus"), "space.kind"),
        (lambda d: d["observable"].update(kind="sin"), "observable.kind"),
        (lambda d: d["mu_sequence"]["dists"][0][0].update(type="shear"), "mu_sequence.dists[0][0].type"),
        (lambda d: d["mu_sequence"]["dists"][0][0].update(a=0.9, b=0.5), "mu_sequence.dists[0]"),
        (lambda d: d["propagation"].update(max_support=0), "propagation.max_support"),
        (lambda d: d["propagation"]["prune"].append({"kind": "truncate", "epsilon": 0.1}), "propagation.prune[2]"),
        (lambda d: d.update(start_points=[3.0]), "start_points"),
        (lambda d: d["nu0"].update(support=[1.5]), "nu0"),
    ],
)
def test_schema_violations(cantor_doc, mutate, field):
    doc = copy.deepcopy(cantor_doc)
    mutate(doc)
    with pytest.raises(ScenarioError) as e:
        parse_scenario(doc)
    assert e.value.field == field


def test_invalid_json_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "version": "nonstat-rds/1",\n  "space": \n}')
    with pytest.raises(ScenarioError, match="line 4"):
        load_scenario(p)


@pytest.mark.parametrize("phi", [AffineObs(0.5, -1.0), Poly((1.0, 2.0)), CosK(3, 2.0), Indicator(0.1, 0.2, 1.0), Table((0.0, 2.0))])
def test_observable_roundtrip(phi):
    assert parse_observable(observable_to_json(phi)) == phi


def test_sequence_roundtrip(cantor_doc):
    sc = parse_scenario(cantor_doc)
    again = parse_sequence(sc.space, sequence_to_json(sc.seq))
    assert [d.to_json() for d in again.dists] == [d.to_json() for d in sc.seq.dists]


def test_measure_file(scenarios_dir):
    mu = load_measure(scenarios_dir / "measures" / "a.json")
    assert mu.support.tolist() == [0.0, 0.5]
