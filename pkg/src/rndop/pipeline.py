"""Iterative anchor addition: solver-based (rnd/tr) and eigenvector-based (eig).

Both drivers work in a local frame whose origin is the centroid of the
current anchors. After each addition every anchor and the box move by the
new centroid; a cumulative offset maps the local frame back to the
deployment (global) frame.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CapExhausted, DegenerateInitial, PlacementAborted, SingularC, ZeroFeasible
from .geometry import AnchorMatrix, AnchorSet, direction
from .placement import (
    BoxConstraint,
    IterationBounds,
    PlacementProblem,
    achieved_sq_rndop,
    eig_candidate_2d,
    eig_candidate_3d,
    iteration_bounds,
    minimax_lower_bounds,
    subproblem_cost,
)
from .solver import SolveOutcome, separation_violation, solve_anchor_subproblem

RUN_SCHEMA_VERSION = 1


@dataclass
class IterationRecord:
    """One addition step. ``k`` counts anchors (valid or not) after the step."""

    k: int
    anchor_gcs: np.ndarray
    anchor_lcs: np.ndarray
    method: str
    bounds: IterationBounds
    achieved_sq: float
    lb_config_sq: float
    lb_universal_sq: float
    valid: bool = True
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "anchor_gcs": [float(v) for v in self.anchor_gcs],
            "anchor_lcs": [float(v) for v in self.anchor_lcs],
            "method": self.method,
            "bounds": [self.bounds.lower, self.bounds.upper],
            "achieved_sq": self.achieved_sq,
            "lb_config_sq": self.lb_config_sq,
            "lb_universal_sq": self.lb_universal_sq,
            "valid": self.valid,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IterationRecord":
        return cls(
            k=int(d["k"]),
            anchor_gcs=np.asarray(d["anchor_gcs"], dtype=float),
            anchor_lcs=np.asarray(d["anchor_lcs"], dtype=float),
            method=d["method"],
            bounds=IterationBounds(*map(float, d["bounds"])),
            achieved_sq=float(d["achieved_sq"]),
            lb_config_sq=float(d["lb_config_sq"]),
            lb_universal_sq=float(d["lb_universal_sq"]),
            valid=bool(d["valid"]),
            diagnostics=dict(d["diagnostics"]),
        )


@dataclass
class PlacementRun:
    """Result of one placement run.

    ``final`` holds the initial anchors followed by the valid added anchors,
    in the global frame. ``step_times`` (seconds since the loop started, one
    entry per record) and ``elapsed`` are wall-clock data and are left out of
    the serialized form so that it stays reproducible.
    """

    mode: str
    method: str
    initial: AnchorSet
    records: list = field(default_factory=list)
    final: AnchorSet | None = None
    elapsed: float = 0.0
    step_times: list = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return sum(not r.valid for r in self.records)

    @property
    def n_valid_added(self) -> int:
        return sum(r.valid for r in self.records)

    def final_max_rndop(self) -> float:
        """Max RNDOP (not squared) of the returned configuration for the run's mode."""
        am = _matrix_of(self.final.positions - self.final.centroid)
        return math.sqrt(achieved_sq_rndop(am, self.mode))

    def to_dict(self) -> dict:
        return {
            "schema_version": RUN_SCHEMA_VERSION,
            "mode": self.mode,
            "method": self.method,
            "initial_gcs": self.initial.positions.tolist(),
            "final_gcs": None if self.final is None else self.final.positions.tolist(),
            "n_failed": self.n_failed,
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "PlacementRun":
        if d.get("schema_version") != RUN_SCHEMA_VERSION:
            raise ValueError(f"unsupported placement schema {d.get('schema_version')!r}")
        final = None if d["final_gcs"] is None else AnchorSet(np.asarray(d["final_gcs"]))
        return cls(
            mode=d["mode"],
            method=d["method"],
            initial=AnchorSet(np.asarray(d["initial_gcs"])),
            records=[IterationRecord.from_dict(r) for r in d["records"]],
            final=final,
        )


def _matrix_of(centered: np.ndarray) -> AnchorMatrix:
    return AnchorMatrix.from_c(centered.T @ centered, centered.shape[0])


def _initial_matrix(problem: PlacementProblem, lcs: np.ndarray) -> AnchorMatrix:
    try:
        return _matrix_of(lcs)
    except SingularC as exc:
        hint = " (try a non-coplanar initial set)" if problem.mode == "2d" else (
            "; 3D placement needs anchors spanning all three axes, consider mode 2d"
        )
        raise DegenerateInitial(f"initial anchor matrix is singular{hint}") from exc


def _step_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(k)]).generate_state(1)[0])


def _eig_candidate(problem: PlacementProblem, am: AnchorMatrix, box: BoxConstraint) -> np.ndarray:
    if problem.mode == "3d":
        r = eig_candidate_3d(am.C, box)
    else:
        r = eig_candidate_2d(am.E, am.D, box)
    return box.clip(r)


def _record(problem, k, r_lcs, r_gcs, bounds, am_new, lcs_new, valid, diag) -> IterationRecord:
    if problem.mode == "3d":
        cfg, uni = minimax_lower_bounds(AnchorSet(lcs_new))
        lb_c, lb_u = cfg**2, uni**2
    else:
        lb_c = lb_u = float("nan")
    return IterationRecord(
        k=k,
        anchor_gcs=r_gcs,
        anchor_lcs=r_lcs.copy(),
        method=problem.method,
        bounds=bounds,
        achieved_sq=achieved_sq_rndop(am_new, problem.mode),
        lb_config_sq=float(lb_c),
        lb_universal_sq=float(lb_u),
        valid=valid,
        diagnostics=diag,
    )


class _Frame:
    """Working anchors and box in the local frame plus the offset to the global one."""

    def __init__(self, initial: AnchorSet, box: BoxConstraint):
        self.offset = initial.centroid.copy()
        self.lcs = initial.positions - self.offset
        self.box = box.translated(-self.offset)
        self.gcs_box = box
        self.gcs = [p.copy() for p in initial.positions]
        self.valid = [True] * len(initial)

    def to_gcs(self, r: np.ndarray) -> np.ndarray:
        # clip away the rounding of the accumulated box translations
        return self.gcs_box.clip(r + self.offset)

    def add(self, r: np.ndarray, valid: bool) -> None:
        self.gcs.append(self.to_gcs(r))
        self.lcs = np.vstack([self.lcs, r])
        self.valid.append(valid)
        shift = self.lcs.mean(axis=0)
        self.lcs = self.lcs - shift
        self.box = self.box.translated(-shift)
        self.offset = self.offset + shift

    def valid_lcs(self) -> np.ndarray:
        return self.lcs[np.asarray(self.valid)]

    def final_gcs(self) -> AnchorSet:
        return AnchorSet(np.array(self.gcs)[np.asarray(self.valid)])


def _solver_diag(out: SolveOutcome) -> dict:
    return {
        "cost": float(out.cost),
        "feasible": bool(out.feasible),
        "iterations": int(out.iterations),
        "starts": len(out.starts),
        "converged_starts": int(sum(s.converged for s in out.starts)),
    }


def run_algorithm1(problem: PlacementProblem, initial: AnchorSet) -> PlacementRun:
    """Add ``problem.n_add`` anchors one at a time with the rnd or tr subproblem."""
    if problem.method not in ("rnd", "tr"):
        raise ValueError("run_algorithm1 handles the rnd and tr methods")
    frame = _Frame(initial, problem.box)
    run = PlacementRun(problem.mode, problem.method, initial)
    am = _initial_matrix(problem, frame.lcs)
    t0 = time.perf_counter()
    for step in range(problem.n_add):
        k = am.k
        bounds = iteration_bounds(am, problem.mode)
        try:
            warm = [_eig_candidate(problem, am, frame.box)]
        except ZeroFeasible:
            warm = []
        settings = replace(problem.solver, seed=_step_seed(problem.seed, k))
        out = solve_anchor_subproblem(
            subproblem_cost(problem.method, problem.mode, am),
            frame.box,
            frame.lcs,
            problem.sep,
            settings,
            warm_starts=warm,
        )
        if not out.feasible:
            run.final = frame.final_gcs()
            run.elapsed = time.perf_counter() - t0
            raise PlacementAborted(
                f"no separation-feasible point at k={k + 1} (violation "
                f"{float(separation_violation(out.point, frame.lcs, problem.sep.d_th)):.3e} m)",
                run,
            )
        r = out.point
        r_gcs = frame.to_gcs(r)
        frame.add(r, True)
        am = _matrix_of(frame.lcs)
        run.records.append(
            _record(problem, k + 1, r, r_gcs, bounds, am, frame.lcs, True, _solver_diag(out))
        )
        run.step_times.append(time.perf_counter() - t0)
    run.elapsed = time.perf_counter() - t0
    run.final = frame.final_gcs()
    return run


def _perturb(problem, cand, box, valid_pts, rng):
    """Random moves of length eta*d_th around ``cand``.

    Returns (point, separation, tries, accepted). The first in-box move
    that clears d_th is accepted; otherwise the in-box move with the largest
    separation (or ``cand`` itself if none stayed in the box).
    """
    d_th = problem.sep.d_th
    radius = problem.eta * d_th
    best, best_sep = cand, float(problem.sep.min_distance(cand, valid_pts))
    for j in range(problem.n_max):
        theta = rng.uniform(-np.pi, np.pi)
        # polar angle over [0, pi] so downward moves are possible
        phi = rng.uniform(0.0, np.pi)
        p = cand + radius * direction(theta, phi)
        if not box.contains(p):
            continue
        s = float(problem.sep.min_distance(p, valid_pts))
        if s >= d_th:
            return p, s, j + 1, True
        if s > best_sep:
            best, best_sep = p, s
    return best, best_sep, problem.n_max, False


def run_algorithm2(problem: PlacementProblem, initial: AnchorSet) -> PlacementRun:
    """Eigenvector placement with random perturbation of blocked candidates.

    Anchors that still violate the separation after ``n_max`` perturbations
    are kept in the working set (they shape later anchor matrices) but
    flagged invalid and dropped from ``final``. Separation is checked
    against the valid anchors only.
    """
    if problem.method != "eig":
        raise ValueError("run_algorithm2 handles the eig method")
    frame = _Frame(initial, problem.box)
    run = PlacementRun(problem.mode, problem.method, initial)
    am = _initial_matrix(problem, frame.lcs)
    rng = np.random.default_rng(np.random.SeedSequence([int(problem.seed), 2]))
    limit = problem.n_add + problem.cap
    n_valid = 0
    t0 = time.perf_counter()
    while n_valid < problem.n_add:
        if len(run.records) >= limit:
            run.final = frame.final_gcs()
            run.elapsed = time.perf_counter() - t0
            raise CapExhausted(
                f"{run.n_failed} failed additions exhausted the cap of {problem.cap} "
                f"with {n_valid}/{problem.n_add} valid anchors",
                run,
            )
        k = am.k
        bounds = iteration_bounds(am, problem.mode)
        cand = _eig_candidate(problem, am, frame.box)
        valid_pts = frame.valid_lcs()
        sep = float(problem.sep.min_distance(cand, valid_pts))
        if sep >= problem.sep.d_th:
            r, tries, ok = cand, 0, True
        else:
            r, sep, tries, ok = _perturb(problem, cand, frame.box, valid_pts, rng)
        r_gcs = frame.to_gcs(r)
        frame.add(r, ok)
        am = _matrix_of(frame.lcs)
        diag = {"perturbations": int(tries), "separation": sep}
        run.records.append(_record(problem, k + 1, r, r_gcs, bounds, am, frame.lcs, ok, diag))
        run.step_times.append(time.perf_counter() - t0)
        n_valid += ok
    run.elapsed = time.perf_counter() - t0
    run.final = frame.final_gcs()
    return run


def run_placement(problem: PlacementProblem, initial: AnchorSet) -> PlacementRun:
    """Dispatch to the driver matching ``problem.method``."""
    if problem.method == "eig":
        return run_algorithm2(problem, initial)
    return run_algorithm1(problem, initial)
