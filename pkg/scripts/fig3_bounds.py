"""Achieved squared max RNDOP per iteration with its bounds, for one placement run.

Writes a CSV with the same columns as ``rndop place`` (rndop_vs_k.csv), for
each method on a shared initial configuration.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from rndop.cli import RNDOP_CSV_COLUMNS, rndop_rows
from rndop.experiments import McCampaign, init_search, placement_seed, trial_streams
from rndop.pipeline import run_placement
from rndop.placement import PlacementProblem


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mode", choices=["2d", "3d"], default="3d")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-add", type=int, default=20)
    ap.add_argument("--out", type=Path, default=Path("out/fig3"))
    args = ap.parse_args()

    s_init, s_place, _ = trial_streams(args.seed, 1)[0]
    camp = McCampaign.preset("desk", problem=PlacementProblem(mode=args.mode))
    initial = init_search(camp, np.random.default_rng(s_init)).anchors
    args.out.mkdir(parents=True, exist_ok=True)
    for method in ("rnd", "tr", "eig"):
        problem = PlacementProblem(mode=args.mode, method=method, n_add=args.n_add, seed=placement_seed(s_place))
        run = run_placement(problem, initial)
        path = args.out / f"rndop_vs_k_{args.mode}_{method}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RNDOP_CSV_COLUMNS)
            w.writerows(rndop_rows(run))
        print(f"{method}: final max RNDOP {run.final_max_rndop():.5f}, failed additions {run.n_failed} -> {path}")


if __name__ == "__main__":
    main()
