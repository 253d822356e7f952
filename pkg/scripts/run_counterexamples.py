"""Run both counterexamples and the dense control, writing reports under ``out/``.

    python scripts/run_counterexamples.py [--seed 0] [--out out]
"""

import argparse

from nonstat_rds.experiments import run_rotation_counterexample, run_slow_diffusion

ap = argparse.ArgumentParser()
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--out", default="out")
args = ap.parse_args()

for name, rep in [
    ("slow", run_slow_diffusion(kmax=4, trials=500, seed=args.seed)),
    ("slow_dense", run_slow_diffusion(kmax=4, trials=500, seed=args.seed, dense=True)),
    ("rotation", run_rotation_counterexample()),
]:
    rep.write(f"{args.out}/{name}")
    print(f"{name:>10}: {rep.verdict}", rep.tables["summary"][0])
