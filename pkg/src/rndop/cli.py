"""Command-line front end: ``rndop {place,mc,dopfield}``.

stdout carries one summary line; diagnostics go to stderr as JSON lines.
Exit codes: 0 success, 2 configuration error, 3 infeasible placement.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import geometry
from .config import RunConfig, build_config, load_config_file
from .errors import CapExhausted, ConfigError, Infeasible, NoFeasibleInit, RndopError, TooFewRecords
from .experiments import (
    eval_positioning,
    init_search,
    placement_seed,
    run_campaign,
    select_configs,
    sweep_values,
    timing_percentiles,
    times_by_na,
    trial_streams,
)
from .pipeline import PlacementRun, run_placement

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3
RNDOP_CSV_COLUMNS = ["k", "achieved_sq_rndop", "lb_iter", "ub_iter", "lb_config", "lb_universal"]
CDF_CSV_COLUMNS = ["method", "config_percentile", "error_m", "cdf"]
TIMING_CSV_COLUMNS = ["method", "N_a", "p10_s", "p50_s", "p90_s"]
FIELD_CSV_COLUMNS = ["theta", "phi", "rndop", "dop_at_rt", "lb", "ub"]
_CDF_STREAM = 7


def _diag(event: str, **fields) -> None:
    print(json.dumps({"event": event, **fields}, sort_keys=True, default=str), file=sys.stderr)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _initial(cfg: RunConfig):
    """Configured anchors, or the trial-0 initialization search of ``mc``."""
    s_init, s_place, _ = trial_streams(cfg.seed, 1)[0]
    if cfg.initial_anchors is not None:
        return cfg.initial_anchors, placement_seed(s_place)
    return init_search(cfg.campaign, np.random.default_rng(s_init)).anchors, placement_seed(s_place)


def rndop_rows(run: PlacementRun):
    for r in run.records:
        yield r.k, r.achieved_sq, r.bounds.lower, r.bounds.upper, r.lb_config_sq, r.lb_universal_sq


def cmd_place(cfg: RunConfig) -> int:
    initial, seed = _initial(cfg)
    problem = replace(cfg.problem, seed=seed)
    cfg.out.mkdir(parents=True, exist_ok=True)
    code, run = EXIT_OK, None
    try:
        run = run_placement(problem, initial)
    except (Infeasible, CapExhausted) as exc:
        run, code = exc.run, EXIT_INFEASIBLE
        _diag("infeasible", error=type(exc).__name__, message=str(exc))
    if run is not None:
        (cfg.out / "placement.json").write_text(run.to_json() + "\n")
        _write_csv(cfg.out / "rndop_vs_k.csv", RNDOP_CSV_COLUMNS, rndop_rows(run))
    if code == EXIT_OK:
        print(
            f"place ok: method={problem.method} mode={problem.mode} anchors={len(run.final)} "
            f"failed={run.n_failed} max_rndop={run.final_max_rndop():.6g} out={cfg.out}"
        )
    else:
        print(f"place infeasible: method={problem.method} mode={problem.mode} out={cfg.out}")
    return code


def cmd_mc(cfg: RunConfig, jobs: int = 1) -> int:
    campaign = cfg.campaign
    mode = campaign.problem.mode
    res = run_campaign(campaign, cfg.methods, evaluate=False, jobs=jobs)
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "campaign.json").write_text(res.to_json() + "\n")
    for r in res.records:
        if not r.ok:
            _diag("trial_failed", trial=r.trial, method=r.method, error=r.error)
    cdf_rows, timing_rows = [], []
    n_values = sweep_values(campaign.problem.n_add)
    for m in cfg.methods:
        recs = res.by_method(m)
        try:
            sel = select_configs(recs)
        except TooFewRecords as exc:
            _diag("too_few_records", method=m, message=str(exc))
            return EXIT_INFEASIBLE
        for pct, conf in ((10, sel.good), (90, sel.bad)):
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _CDF_STREAM, pct]))
            cdf = eval_positioning(conf, campaign, mode, rng)
            if cdf.n_not_converged:
                _diag("nls_not_converged", method=m, config_percentile=pct, count=cdf.n_not_converged)
            cdf_rows.extend((m, pct, float(e), float(c)) for e, c in zip(cdf.errors, cdf.cdf))
        tb = times_by_na(recs, n_values)
        if tb:
            n_a, pct = timing_percentiles(tb)
            for i, n in enumerate(n_a):
                timing_rows.append((m, int(n), float(pct[10][i]), float(pct[50][i]), float(pct[90][i])))
    _write_csv(cfg.out / "error_cdf.csv", CDF_CSV_COLUMNS, cdf_rows)
    _write_csv(cfg.out / "timing.csv", TIMING_CSV_COLUMNS, timing_rows)
    n_fail = sum(not r.ok for r in res.records)
    print(
        f"mc ok: mode={mode} trials={campaign.n_mc_algo} methods={','.join(cfg.methods)} "
        f"failed_trials={n_fail} out={cfg.out}"
    )
    return EXIT_OK


def field_grid(n_theta: int, n_phi: int, mode: str):
    """Midpoint grid over theta in [-pi, pi) and phi in [-pi/2, pi/2]; 2D uses phi = pi/2."""
    t = -np.pi + (np.arange(n_theta) + 0.5) * 2 * np.pi / n_theta
    if mode == "2d":
        p = np.array([np.pi / 2])
    else:
        p = -np.pi / 2 + (np.arange(n_phi) + 0.5) * np.pi / n_phi
    tt, pp = np.meshgrid(t, p, indexing="ij")
    return tt.ravel(), pp.ravel()


def dop_field(anchors, n_theta: int, n_phi: int, r_t: float, mode: str):
    """Rows (theta, phi, rndop, dop_at_rt, lb, ub) for centered ``anchors``."""
    kind = "xyz" if mode == "3d" else "xy"
    cen = anchors.centered()
    am = geometry.anchor_matrix(cen)
    theta, phi = field_grid(n_theta, n_phi, mode)
    rn = np.atleast_1d(geometry.rndop(am, theta, phi, kind))
    targets = r_t * geometry.direction(theta, phi)
    dop = geometry.exact_dop_many(cen, targets, kind)
    lb, ub = geometry.rndop_bounds(am, kind)
    for i in range(theta.size):
        yield float(theta[i]), float(phi[i]), float(rn[i]), float(dop[i]), lb, ub


def cmd_dopfield(cfg: RunConfig) -> int:
    initial, _ = _initial(cfg)
    f = cfg.dopfield
    cfg.out.mkdir(parents=True, exist_ok=True)
    rows = list(dop_field(initial, f.n_theta, f.n_phi, f.r_t, cfg.mode))
    _write_csv(cfg.out / "dop_field.csv", FIELD_CSV_COLUMNS, rows)
    print(f"dopfield ok: mode={cfg.mode} points={len(rows)} r_t={f.r_t:g} out={cfg.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rndop", description="Far-field anchor placement and evaluation.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("place", "run one iterative placement"),
        ("mc", "run a Monte-Carlo campaign"),
        ("dopfield", "tabulate RNDOP and exact DOP over directions"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="JSON config (schema v1)")
        p.add_argument("--preset", choices=["desk", "paper"])
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path)
        p.add_argument("--method", choices=["rnd", "tr", "eig"])
        p.add_argument("--mode", choices=["2d", "3d"])
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = load_config_file(args.config) if args.config else None
        cfg = build_config(doc, preset=args.preset, seed=args.seed, out=args.out, method=args.method, mode=args.mode)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.command == "place":
            return cmd_place(cfg)
        if args.command == "mc":
            return cmd_mc(cfg, jobs=args.jobs)
        return cmd_dopfield(cfg)
    except ConfigError as exc:
        _diag("config_error", message=str(exc))
        print(f"{args.command} failed: configuration error")
        return EXIT_CONFIG
    except NoFeasibleInit as exc:
        _diag("no_feasible_init", message=str(exc))
        print(f"{args.command} failed: no feasible initial configuration")
        return EXIT_INFEASIBLE
    except RndopError as exc:
        _diag("error", error=type(exc).__name__, message=str(exc))
        print(f"{args.command} failed: {type(exc).__name__}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
