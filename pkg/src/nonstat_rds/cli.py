"""``nonstat-rds`` command line.

Exit codes: 0 success, 2 input error, 3 resource limit (support overflow,
oracle size cap), 4 inconclusive result under ``--strict``.

Every CSV starts with a ``#`` comment line carrying the tool version and
the sha256 of the input file; JSON outputs carry the same two fields.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from . import experiments as ex
from .measures import SpaceMismatch, wasserstein
from .models import NotInvertible
from .propagation import EXACT, PropagationConfig, SupportOverflow, backward_propagate, martingale_check
from .scenario import ScenarioError, load_measure, load_scenario, scenario_hash
from .simulate import (
    MIN_EXCEED,
    CensoredFit,
    contraction_curve,
    default_n_grid,
    fit_exceedance,
    first_reaching,
    nu_means,
    resolve_threads,
    scenario_nus,
    simulate_deviations,
)
from .transport import OracleSizeCap

EXIT_OK, EXIT_INPUT, EXIT_RESOURCE, EXIT_INCONCLUSIVE = 0, 2, 3, 4
TOOL = f"nonstat-rds {__version__}"


class Inconclusive(Exception):
    pass


def _stamp(sha: str | None) -> str:
    return f"{TOOL} input-sha256={sha}" if sha else TOOL


def _write_json(path: Path, doc: dict, sha: str | None):
    doc = {"tool": TOOL, "input_sha256": sha, **doc}
    path.write_text(json.dumps(ex.finite_json(doc), indent=2, allow_nan=False) + "\n")


def _floats(text: str, name: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ScenarioError(name, f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str, name: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ScenarioError(name, f"expected comma-separated integers, got {text!r}") from None


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def ldfit_doc(series, sc) -> dict:
    if series.values.shape[0] < 100:
        return {"status": "insufficient_trials", "reason": "the decay fit needs at least 100 trials"}
    try:
        fit = fit_exceedance(series.n_grid, series.exceed_count(sc.epsilon), series.values.shape[0], sc.epsilon)
    except CensoredFit as e:
        return {
            "status": "censored",
            "reason": str(e),
            "epsilon": sc.epsilon,
            "n_grid": [int(n) for n in series.n_grid],
            "exceed_count": [0] * len(series.n_grid),
        }
    status = "ok" if math.isfinite(fit.slope) else "censored"
    doc = {"status": status, **fit.to_json()}
    if status == "censored":
        doc["reason"] = f"fewer than 2 grid points with >= {MIN_EXCEED} exceedances"
    doc["zero_beyond_256"] = fit.zero_beyond(256)
    return doc


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario, args.seed)
    sha = scenario_hash(args.scenario)
    out = _out(args)
    nus = scenario_nus(sc)
    means = nu_means(sc, nus)
    ex.write_csv(
        out / "nus.csv",
        [{"k": k, "mean_phi": float(m), "support_size": len(nu)} for k, (m, nu) in enumerate(zip(means, nus))],
        _stamp(sha),
    )
    series = simulate_deviations(sc, means, threads=args.threads)
    ex.write_csv(out / "deviations.csv", series.summary_rows(sc.epsilon), _stamp(sha))
    ex.write_csv(
        out / "trials.csv",
        [
            {"trial": int(t), **{f"D_{n}": float(v) for n, v in zip(series.n_grid, row)}}
            for t, row in zip(series.trial_ids, series.values)
        ],
        _stamp(sha),
    )
    doc = ldfit_doc(series, sc)
    _write_json(out / "ldfit.json", {"seed": sc.seed, **doc}, sha)
    if args.strict and not (doc["status"] == "ok" and doc["decays"]):
        raise Inconclusive(doc.get("reason") or "no significant exponential decay")
    return EXIT_OK


def cmd_ld(args) -> int:
    sc = load_scenario(args.scenario, args.seed)
    sha = scenario_hash(args.scenario)
    out = _out(args)
    n_grid = _ints(args.n_grid, "--n-grid") if args.n_grid else default_n_grid(sc.horizon)
    series = simulate_deviations(sc, n_grid=n_grid, threads=args.threads)
    doc = ldfit_doc(series, sc)
    _write_json(out / "ldfit.json", {"seed": sc.seed, **doc}, sha)
    ex.write_csv(
        out / "exceedance.csv",
        [
            {"n": int(n), "exceed_count": int(c), "exceed_prob": float(c) / series.values.shape[0]}
            for n, c in zip(series.n_grid, series.exceed_count(sc.epsilon))
        ],
        _stamp(sha),
    )
    print(json.dumps({k: doc.get(k) for k in ("status", "slope", "slope_se", "decays")}))
    if args.strict and not (doc["status"] == "ok" and doc["decays"]):
        raise Inconclusive(doc.get("reason") or "no significant exponential decay")
    return EXIT_OK


def _finish_report(report: ex.ExperimentReport, args, sha: str | None) -> int:
    report.scenario = {"input_sha256": sha, **report.scenario} if sha else report.scenario
    report.write(args.out)
    print(f"{report.name}: {report.verdict}" + (f" ({report.reason})" if report.reason else ""))
    if args.strict and report.verdict == ex.INCONCLUSIVE:
        raise Inconclusive(report.reason)
    return EXIT_OK


def cmd_check_sa(args) -> int:
    sc = load_scenario(args.scenario, args.seed)
    sha = scenario_hash(args.scenario)
    deltas = _floats(args.deltas, "--deltas")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ScenarioError("--deltas", "must be strictly decreasing")
    report = ex.profile_standing_assumption(
        sc.seq,
        deltas,
        _ints(args.n_probes, "--n-probes"),
        pair_samples=args.pair_samples,
        seed=sc.seed,
        m_cap=args.m_cap,
        cfg=sc.propagation if args.use_scenario_pruning else ex.PROFILE_CFG,
    )
    return _finish_report(report, args, sha)


def _require_seed(args) -> int:
    if args.seed is None:
        raise ScenarioError("--seed", "required (no silent random seed)")
    return args.seed


def cmd_counterexample(args) -> int:
    if args.which == "slow":
        report = ex.run_slow_diffusion(
            kmax=args.kmax, trials=args.trials, seed=_require_seed(args), dense=args.dense, dense_horizon=args.dense_horizon
        )
    else:
        report = ex.run_rotation_counterexample(alpha=args.alpha, x0=args.x0, horizon=args.horizon, kmax=args.kmax)
    return _finish_report(report, args, None)


def cmd_wasserstein(args) -> int:
    mu, nu = load_measure(args.a), load_measure(args.b)
    d = wasserstein(mu, nu)
    print(repr(d))
    if args.out:
        _write_json(
            _out(args) / "wasserstein.json",
            {"distance": d, "b_sha256": scenario_hash(args.b)},
            scenario_hash(args.a),
        )
    return EXIT_OK


def cmd_martingale(args) -> int:
    sc = load_scenario(args.scenario, args.seed)
    sha = scenario_hash(args.scenario)
    out = _out(args)
    cfg = PropagationConfig(max_support=args.max_support, prune=EXACT.prune)
    backward = backward_propagate(sc.seq, args.n, cfg, args.grid)
    arcs = [tuple(_floats(a, "--arc")) for a in args.arc]
    if any(len(a) != 2 for a in arcs):
        raise ScenarioError("--arc", "each arc is LO,HI")
    rows = []
    for lo, hi in arcs:
        for i in range(1, args.n + 1):
            lhs, rhs, se = martingale_check(
                sc.seq, i, args.n, (lo, hi), args.trials, sc.seed, backward=backward, grid_size=args.grid
            )
            rows.append({"i": i, "arc_lo": lo, "arc_hi": hi, "lhs": lhs, "rhs": rhs, "abs_diff": abs(lhs - rhs), "se": se})
    ex.write_csv(out / "martingale.csv", rows, _stamp(sha))
    worst = max(r["abs_diff"] for r in rows)
    print(f"max |lhs - rhs| = {worst:.3e}")
    return EXIT_OK


def cmd_two_point(args) -> int:
    sc = load_scenario(args.scenario, args.seed)
    sha = scenario_hash(args.scenario)
    out = _out(args)
    m_grid = _ints(args.m_grid, "--m-grid") if args.m_grid else list(range(1, 201))
    eps = args.epsilon if args.epsilon is not None else sc.epsilon
    probs = contraction_curve(sc.seq, args.x, args.y, m_grid, args.trials or sc.trials, sc.seed, eps)
    ex.write_csv(
        out / "two_point.csv",
        [{"m": int(m), "prob_within_eps": float(p)} for m, p in zip(m_grid, probs)],
        _stamp(sha),
    )
    hit = first_reaching(m_grid, probs, args.level)
    _write_json(
        out / "two_point.json",
        {"x": args.x, "y": args.y, "epsilon": eps, "level": args.level, "first_m": hit, "seed": sc.seed},
        sha,
    )
    print(f"first m reaching {args.level}: {hit}")
    if args.strict and hit is None:
        raise Inconclusive(f"probability {args.level} not reached within the m grid")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nonstat-rds", description="Non-stationary random dynamical systems toolkit.")
    p.add_argument("--version", action="version", version=TOOL)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True, out_default="out"):
        if scenario:
            sp.add_argument("scenario", help="scenario JSON file")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default: $NONSTAT_RDS_THREADS or 1)")
        sp.add_argument("--strict", action="store_true", help="exit 4 when the result is inconclusive")

    sp = sub.add_parser("simulate", help="nus.csv, deviations.csv, trials.csv and ldfit.json")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("ld", help="exceedance probabilities and exponential-decay fit")
    common(sp)
    sp.add_argument("--n-grid", default=None, help="comma-separated n values (default dyadic)")
    sp.set_defaults(func=cmd_ld)

    sp = sub.add_parser("check-sa", help="profile m(delta) of the standing assumption")
    common(sp)
    sp.add_argument("--deltas", default="0.5,0.1,0.01", help="strictly decreasing, comma-separated")
    sp.add_argument("--n-probes", default="1,10,100")
    sp.add_argument("--pair-samples", type=int, default=8)
    sp.add_argument("--m-cap", type=int, default=64)
    sp.add_argument("--use-scenario-pruning", action="store_true", help="propagate with the scenario's pruning config")
    sp.set_defaults(func=cmd_check_sa)

    sp = sub.add_parser("counterexample", help="canned counterexamples")
    sp.add_argument("which", choices=["slow", "rotation"])
    common(sp, scenario=False)
    sp.add_argument("--kmax", type=int, default=4)
    sp.add_argument("--trials", type=int, default=500)
    sp.add_argument("--dense", action="store_true", help="slow: shuffle at every step (control)")
    sp.add_argument("--dense-horizon", type=int, default=2**14)
    sp.add_argument("--alpha", type=float, default=(math.sqrt(5) - 1) / 2)
    sp.add_argument("--x0", type=float, default=0.1)
    sp.add_argument("--horizon", type=int, default=10_000)
    sp.set_defaults(func=cmd_counterexample)

    sp = sub.add_parser("wasserstein", help="W1 distance between two measure files")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_wasserstein)

    sp = sub.add_parser("martingale", help="backward-measure martingale check")
    common(sp)
    sp.add_argument("--n", type=int, default=5)
    sp.add_argument("--arc", action="append", default=None, help="LO,HI (repeatable)")
    sp.add_argument("--grid", type=int, default=512, help="Lebesgue grid size")
    sp.add_argument("--trials", type=int, default=None, help="sample maps instead of exact enumeration")
    sp.add_argument("--max-support", type=int, default=1 << 20)
    sp.set_defaults(func=cmd_martingale)

    sp = sub.add_parser("two-point", help="two-point contraction probabilities")
    common(sp)
    sp.add_argument("--x", type=float, required=True)
    sp.add_argument("--y", type=float, required=True)
    sp.add_argument("--m-grid", default=None, help="comma-separated m values (default 1..200)")
    sp.add_argument("--trials", type=int, default=None, help="default: scenario trials")
    sp.add_argument("--epsilon", type=float, default=None, help="default: scenario epsilon")
    sp.add_argument("--level", type=float, default=0.95)
    sp.set_defaults(func=cmd_two_point)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "martingale" and not args.arc:
        args.arc = ["0,0.5", "0.25,1"]
    if hasattr(args, "threads"):
        args.threads = resolve_threads(args.threads)
    try:
        return args.func(args)
    except (SupportOverflow, OracleSizeCap, MemoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except Inconclusive as e:
        print(f"inconclusive: {e}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except ScenarioError as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (FileNotFoundError, IsADirectoryError, ValueError, TypeError, SpaceMismatch, NotInvertible) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
