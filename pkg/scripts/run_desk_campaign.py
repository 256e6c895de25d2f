"""Desk-scale Monte-Carlo campaign: final max RNDOP and median NLS error per method.

    python scripts/run_desk_campaign.py --mode 3d --seed 2024 --trials 50
"""

import argparse
import json
from pathlib import Path

import numpy as np

from rndop.experiments import McCampaign, run_campaign
from rndop.placement import PlacementProblem


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mode", choices=["2d", "3d"], default="3d")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("out/desk_campaign"))
    args = ap.parse_args()

    camp = McCampaign.preset("desk", seed=args.seed, n_mc_algo=args.trials, problem=PlacementProblem(mode=args.mode))
    res = run_campaign(camp, evaluate=True, jobs=args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "campaign.json").write_text(res.to_json() + "\n")

    summary = {}
    for m in res.methods:
        ok = [r for r in res.by_method(m) if r.ok]
        summary[m] = {
            "trials_ok": len(ok),
            "final_rndop_median": float(np.median([r.final_rndop for r in ok])),
            "median_error_m": float(np.median([r.median_error for r in ok])),
            "t_exec_median_s": float(np.median([r.t_exec for r in ok])),
            "failed_additions": int(sum(r.run.n_failed for r in ok)),
        }
    print(json.dumps(summary, indent=1))


if __name__ == "__main__":
    main()
