"""Pilot run for the two-phase Cantor scenario; writes the golden medians file.

    python scripts/pilot_cantor.py [--trials 200] [--out tests/golden/cantor_medians.csv]

The acceptance threshold on the terminal median (0.02) was chosen from this
pilot: the pilot median at n = 2^14 sits well below it.
"""

import argparse
import time
from pathlib import Path

from nonstat_rds.scenario import load_scenario
from nonstat_rds.simulate import nu_means, scenario_nus, simulate_deviations

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenario", default=ROOT / "scenarios" / "cantor_periodic.json")
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--out", default=ROOT / "tests" / "golden" / "cantor_medians.csv")
    args = ap.parse_args()

    t0 = time.perf_counter()
    sc = load_scenario(args.scenario).with_(trials=args.trials)
    series = simulate_deviations(sc, nu_means(sc, scenario_nus(sc)))
    med = series.median
    with open(args.out, "w") as fh:
        fh.write(f"# seed={sc.seed} trials={sc.trials} horizon={sc.horizon}\n")
        fh.write("n,median_D\n")
        for n, m in zip(series.n_grid, med):
            fh.write(f"{int(n)},{float(m)!r}\n")
    print(f"wrote {args.out} in {time.perf_counter() - t0:.1f}s; terminal median {med[-1]:.5f}")


if __name__ == "__main__":
    main()
