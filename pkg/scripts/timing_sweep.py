"""Execution-time percentiles vs N_a and their linear fits.

Times are read off the N_a = 20 runs at the moments 5, 10, 15 and 20 valid
anchors exist; a shorter run with the same seed replays those steps exactly.
"""

import argparse

from rndop.experiments import McCampaign, run_campaign, sweep_values, timing_stats, times_by_na
from rndop.placement import PlacementProblem


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mode", choices=["2d", "3d"], default="3d")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--trials", type=int, default=20)
    args = ap.parse_args()

    camp = McCampaign.preset("desk", seed=args.seed, n_mc_algo=args.trials, problem=PlacementProblem(mode=args.mode))
    res = run_campaign(camp)
    print("method  N_a    p10_s    p50_s    p90_s")
    for m in res.methods:
        stats = timing_stats(times_by_na(res.by_method(m), sweep_values(20)))
        for n, p10, p50, p90 in stats.rows():
            print(f"{m:6s} {n:4d} {p10:8.4f} {p50:8.4f} {p90:8.4f}")
        fit = stats.fits[50]
        r2 = "n/a" if fit.r2 is None else f"{fit.r2:.4f}"
        print(f"{m:6s} t50 = {fit.slope:.4g} * N_a + {fit.intercept:.4g}  (R^2 {r2})")


if __name__ == "__main__":
    main()
