"""Wall-clock benchmark: horizon 10^4, 200 trials on the Cantor scenario.

    python scripts/benchmark.py
"""

import time
from pathlib import Path

from nonstat_rds.scenario import load_scenario
from nonstat_rds.simulate import fit_exceedance, nu_means, scenario_nus, simulate_deviations

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    sc = load_scenario(ROOT / "scenarios" / "cantor_periodic.json").with_(horizon=10_000, trials=200)
    t0 = time.perf_counter()
    nus = scenario_nus(sc)
    t1 = time.perf_counter()
    series = simulate_deviations(sc, nu_means(sc, nus))
    t2 = time.perf_counter()
    print(f"propagation {t1 - t0:.2f}s, simulation {t2 - t1:.2f}s, total {t2 - t0:.2f}s")
    print(f"median D at n={series.n_grid[-1]}: {series.median[-1]:.5f}")
