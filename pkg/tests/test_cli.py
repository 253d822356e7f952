import json

import pytest

from nonstat_rds.cli import main


def small_scenario(tmp_path, scenarios_dir, **changes):
    doc = json.loads((scenarios_dir / "cantor_periodic.json").read_text())
    doc.update(horizon=512, trials=120)
    doc.update(changes)
    p = tmp_path / "sc.json"
    p.write_text(json.dumps(doc))
    return p


def test_simulate_writes_outputs(tmp_path, scenarios_dir):
    sc = small_scenario(tmp_path, scenarios_dir)
    out = tmp_path / "out"
    assert main(["simulate", str(sc), "--out", str(out)]) == 0
    for name in ("nus.csv", "deviations.csv", "trials.csv", "ldfit.json"):
        assert (out / name).exists()
    header = (out / "deviations.csv").read_text().splitlines()[:2]
    assert header[0].startswith("# nonstat-rds ") and "input-sha256=" in header[0]
    assert header[1] == "n,mean_D,q05,q50,q95,exceed_prob"
    assert (out / "nus.csv").read_text().splitlines()[1] == "k,mean_phi,support_size"
    fit = json.loads((out / "ldfit.json").read_text())
    assert fit["tool"].startswith("nonstat-rds") and len(fit["input_sha256"]) == 64


def test_simulate_is_byte_identical(tmp_path, scenarios_dir):
    sc = small_scenario(tmp_path, scenarios_dir)
    for d in ("a", "b"):
        assert main(["simulate", str(sc), "--out", str(tmp_path / d)]) == 0
    for name in ("nus.csv", "deviations.csv", "trials.csv", "ldfit.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_threads_do_not_change_output(tmp_path, scenarios_dir, monkeypatch):
    sc = small_scenario(tmp_path, scenarios_dir, trials=300)
    assert main(["simulate", str(sc), "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    monkeypatch.setenv("NONSTAT_RDS_THREADS", "4")
    monkeypatch.setattr("nonstat_rds.simulate.CHUNK", 64)
    assert main(["simulate", str(sc), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "trials.csv").read_bytes() == (tmp_path / "b" / "trials.csv").read_bytes()


def test_bad_probabilities_exit_2(tmp_path, scenarios_dir, capsys):
    doc = json.loads((scenarios_dir / "cantor_periodic.json").read_text())
    doc["mu_sequence"]["dists"][0][1]["p"] = 0.6
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    assert main(["simulate", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "mu_sequence.dists[0]" in capsys.readouterr().err


def test_missing_seed_exit_2(tmp_path, scenarios_dir, capsys):
    doc = json.loads((scenarios_dir / "cantor_periodic.json").read_text())
    del doc["seed"]
    p = tmp_path / "noseed.json"
    p.write_text(json.dumps(doc))
    assert main(["simulate", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "seed" in capsys.readouterr().err
    assert main(["ld", str(p), "--out", str(tmp_path / "o"), "--seed", "5"]) == 0


def test_overflow_exit_3(tmp_path, scenarios_dir):
    sc = small_scenario(tmp_path, scenarios_dir, propagation={"max_support": 8, "prune": [{"kind": "merge"}]})
    assert main(["simulate", str(sc), "--out", str(tmp_path / "o")]) == 3


def test_missing_file_exit_2(tmp_path):
    assert main(["simulate", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_strict_inconclusive_exit_4(tmp_path, scenarios_dir):
    sc = scenarios_dir / "two_point_sparse.json"
    args = ["check-sa", str(sc), "--out", str(tmp_path / "o"), "--m-cap", "8", "--deltas", "0.5"]
    assert main(args) == 0
    assert main(args + ["--strict"]) == 4


def test_counterexamples(tmp_path, capsys):
    assert main(["counterexample", "slow", "--out", str(tmp_path / "s")]) == 2
    assert main(["counterexample", "slow", "--seed", "3", "--kmax", "3", "--out", str(tmp_path / "s")]) == 0
    assert main(["counterexample", "rotation", "--horizon", "500", "--out", str(tmp_path / "r")]) == 0
    out = capsys.readouterr().out
    assert out.count("EXHIBITS_COUNTEREXAMPLE") == 2
    assert json.loads((tmp_path / "r" / "report.json").read_text())["verdict"] == "EXHIBITS_COUNTEREXAMPLE"


def test_wasserstein_command(scenarios_dir, capsys, tmp_path):
    m = scenarios_dir / "measures"
    assert main(["wasserstein", str(m / "a.json"), str(m / "b.json"), "--out", str(tmp_path)]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.75)
    assert json.loads((tmp_path / "wasserstein.json").read_text())["distance"] == pytest.approx(0.75)


def test_martingale_command(tmp_path, scenarios_dir):
    assert main(["martingale", str(scenarios_dir / "sl2_pair.json"), "--n", "3", "--grid", "64", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "martingale.csv").read_text().splitlines()
    assert len(rows) == 2 + 2 * 3


def test_two_point_command(tmp_path, scenarios_dir):
    args = ["two-point", str(scenarios_dir / "sl2_pair.json"), "--x", "0.3", "--y", "2.0", "--trials", "500",
            "--m-grid", "10,50,100", "--out", str(tmp_path)]
    assert main(args) == 0
    doc = json.loads((tmp_path / "two_point.json").read_text())
    assert doc["first_m"] in (10, 50, 100)


def test_check_sa_command(tmp_path, scenarios_dir):
    args = ["check-sa", str(scenarios_dir / "cantor_periodic.json"), "--deltas", "0.1,0.01", "--n-probes", "1,2",
            "--out", str(tmp_path)]
    assert main(args) == 0
    lines = (tmp_path / "m_of_delta.csv").read_text().splitlines()
    assert lines[1].startswith("0.1,3,") and lines[2].startswith("0.01,5,")


def test_bad_deltas_exit_2(tmp_path, scenarios_dir):
    args = ["check-sa", str(scenarios_dir / "cantor_periodic.json"), "--deltas", "0.01,0.1", "--out", str(tmp_path)]
    assert main(args) == 2
