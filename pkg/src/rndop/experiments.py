"""Monte-Carlo campaigns over initial configurations, placements and targets.

Randomness is organized per trial: the master seed spawns one
``SeedSequence`` per trial, which in turn spawns independent streams for the
initial-configuration search, the placement run and the target/noise draws.
Every method in a trial reuses the same three streams.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InsufficientSweep, NoFeasibleInit, RndopError, TooFewRecords
from .geometry import AnchorSet
from .localize import RangeModel, nls_fix_many, simulate_ranges_many
from .pipeline import PlacementRun, run_placement
from .placement import PlacementProblem

CAMPAIGN_SCHEMA_VERSION = 1
N_INIT_ANCHORS = 4
SWEEP_VALUES = (5, 10, 15, 20)
_INIT_CHUNK = 20_000


@dataclass(frozen=True)
class McCampaign:
    n_mc_init: int = 100_000
    n_mc_algo: int = 500
    n_targ: int = 10_000
    r_cov: float = 200.0
    model: RangeModel = field(default_factory=RangeModel)
    problem: PlacementProblem = field(default_factory=PlacementProblem)
    seed: int = 0
    init_sigma: float = 10.0  # NLS start = truth + N(0, init_sigma^2) per axis

    def __post_init__(self):
        if min(self.n_mc_init, self.n_mc_algo, self.n_targ) < 1:
            raise ValueError("campaign counts must be >= 1")
        if not self.r_cov > 0:
            raise ValueError("r_cov must be positive")

    @classmethod
    def preset(cls, name: str, **overrides) -> "McCampaign":
        """``paper`` keeps the full-scale defaults; ``desk`` shrinks trials and targets."""
        if name == "paper":
            base = cls()
        elif name == "desk":
            base = cls(n_mc_algo=50, n_targ=1_000, problem=PlacementProblem(n_add=20))
        else:
            raise ValueError(f"unknown preset {name!r}")
        return replace(base, **overrides)

    def to_dict(self) -> dict:
        p = self.problem
        return {
            "n_mc_init": self.n_mc_init,
            "n_mc_algo": self.n_mc_algo,
            "n_targ": self.n_targ,
            "r_cov": self.r_cov,
            "b": self.model.b,
            "sigma_w": self.model.sigma_w,
            "init_sigma": self.init_sigma,
            "seed": self.seed,
            "mode": p.mode,
            "n_add": p.n_add,
            "box": [p.box.lower.tolist(), p.box.upper.tolist()],
            "d_th": p.sep.d_th,
            "eta": p.eta,
            "n_max": p.n_max,
            "cap": p.cap,
            "multistart": p.solver.multistart,
        }


@dataclass(frozen=True)
class InitResult:
    anchors: AnchorSet
    score: float  # squared max RNDOP of the campaign's mode
    n_feasible: int


@dataclass
class TrialRecord:
    trial: int
    method: str
    initial: AnchorSet
    run: PlacementRun | None
    t_exec: float
    final_rndop: float
    error: str | None = None
    median_error: float | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return {
            "trial": self.trial,
            "method": self.method,
            "initial_gcs": self.initial.positions.tolist(),
            "final_gcs": None if self.run is None or self.run.final is None
            else self.run.final.positions.tolist(),
            "n_failed": None if self.run is None else self.run.n_failed,
            "final_rndop": self.final_rndop,
            "error": self.error,
            "median_error": self.median_error,
        }


@dataclass
class CampaignResult:
    campaign: McCampaign
    methods: tuple
    records: list

    def by_method(self, method: str) -> list:
        return [r for r in self.records if r.method == method]

    def to_json(self) -> str:
        """Deterministic serialization; wall-clock timings are left out."""
        doc = {
            "schema_version": CAMPAIGN_SCHEMA_VERSION,
            "campaign": self.campaign.to_dict(),
            "methods": list(self.methods),
            "trials": [r.to_dict() for r in self.records],
        }
        return json.dumps(doc, sort_keys=True, indent=1)


@dataclass(frozen=True)
class ConfigSelection:
    good_index: int  # 1-based rank in ascending order
    good: AnchorSet
    good_rndop: float
    bad_index: int
    bad: AnchorSet
    bad_rndop: float


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float | None  # None when the series has zero variance


@dataclass(frozen=True)
class TimingStats:
    n_a: np.ndarray
    p10: np.ndarray
    p50: np.ndarray
    p90: np.ndarray
    fits: dict

    def rows(self):
        for i, n in enumerate(self.n_a):
            yield int(n), float(self.p10[i]), float(self.p50[i]), float(self.p90[i])


@dataclass(frozen=True)
class ErrorCdf:
    """Empirical CDF: ``errors`` ascending, ``cdf[i] = (i + 1) / n``."""

    errors: np.ndarray
    cdf: np.ndarray
    n_not_converged: int = 0

    @property
    def median(self) -> float:
        return float(np.median(self.errors))

    def quantile(self, q: float) -> float:
        return float(nearest_rank(self.errors, 100.0 * q))


def _sq_rndop_batch(pos: np.ndarray, mode: str) -> np.ndarray:
    """Squared max RNDOP for a stack of anchor sets (..., N, 3); inf if singular."""
    cen = pos - pos.mean(axis=-2, keepdims=True)
    c = np.einsum("...ni,...nj->...ij", cen, cen)
    lam = np.linalg.eigvalsh(c)
    ok = lam[..., 0] > 1e-12 * np.maximum(1.0, lam.sum(axis=-1))
    out = np.full(lam.shape[:-1], np.inf)
    if mode == "3d":
        out[ok] = 1.0 / lam[ok][:, 0] + 1.0 / lam[ok][:, 1]
        return out
    e = np.linalg.inv(c[ok])[:, :2, :2]
    a, b, d = e[:, 0, 0], e[:, 0, 1], e[:, 1, 1]
    out[ok] = 0.5 * (a + d) + np.sqrt(0.25 * (a - d) ** 2 + b * b)
    return out


def init_search(campaign: McCampaign, rng: np.random.Generator) -> InitResult:
    """Best of ``n_mc_init`` uniform 4-anchor sets that satisfy the separation."""
    p = campaign.problem
    lo, hi, d_th = p.box.lower, p.box.upper, p.sep.d_th
    iu = np.triu_indices(N_INIT_ANCHORS, 1)
    best, best_score, n_feas = None, np.inf, 0
    left = campaign.n_mc_init
    while left > 0:
        m = min(left, _INIT_CHUNK)
        left -= m
        pos = lo + rng.random((m, N_INIT_ANCHORS, 3)) * (hi - lo)
        d = np.linalg.norm(pos[:, :, None, :] - pos[:, None, :, :], axis=-1)[:, iu[0], iu[1]]
        feas = d.min(axis=1) >= d_th
        n_feas += int(feas.sum())
        if not feas.any():
            continue
        cand = pos[feas]
        score = _sq_rndop_batch(cand, p.mode)
        j = int(np.argmin(score))
        if score[j] < best_score:
            best, best_score = cand[j], float(score[j])
    if best is None or not np.isfinite(best_score):
        raise NoFeasibleInit(f"none of {campaign.n_mc_init} random sets satisfies d_th = {d_th}")
    return InitResult(AnchorSet(best), best_score, n_feas)


def sample_targets(n: int, r_cov: float, mode: str, rng: np.random.Generator) -> np.ndarray:
    """Uniform in the ball of radius ``r_cov`` (3D) or the disc on z = 0 (2D)."""
    if mode == "3d":
        u = rng.standard_normal((n, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return u * (r_cov * rng.random(n) ** (1.0 / 3.0))[:, None]
    ang = rng.uniform(-np.pi, np.pi, n)
    rad = r_cov * np.sqrt(rng.random(n))
    return np.stack([rad * np.cos(ang), rad * np.sin(ang), np.zeros(n)], axis=1)


def eval_positioning(config: AnchorSet, campaign: McCampaign, mode: str, rng: np.random.Generator) -> ErrorCdf:
    """Fix ``n_targ`` random targets with noisy ranges and return the error CDF.

    2D errors are horizontal; 3D errors are full Euclidean.
    """
    targets = sample_targets(campaign.n_targ, campaign.r_cov, mode, rng)
    ranges = simulate_ranges_many(config, targets, campaign.model, rng)
    dims = 3 if mode == "3d" else 2
    guess = targets[:, :dims] + campaign.init_sigma * rng.standard_normal((len(targets), dims))
    fix = nls_fix_many(config, ranges, mode, guess)
    err = np.sort(np.linalg.norm((fix.positions - targets)[:, :dims], axis=1))
    cdf = np.arange(1, err.size + 1) / err.size
    return ErrorCdf(err, cdf, int((~fix.converged).sum()))


def _trial_streams(seed: int, n: int):
    return np.random.SeedSequence(int(seed)).spawn(n)


def trial_streams(seed: int, n: int) -> list:
    """Per-trial (init, placement, targets) seed sequences."""
    return [tuple(ss.spawn(3)) for ss in _trial_streams(seed, n)]


def placement_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1)[0])


def _run_trial(campaign: McCampaign, methods, trial: int, streams, evaluate: bool):
    s_init, s_place, s_targ = streams
    try:
        init = init_search(campaign, np.random.default_rng(s_init)).anchors
    except NoFeasibleInit as exc:
        empty = AnchorSet(np.zeros((N_INIT_ANCHORS, 3)))
        return [TrialRecord(trial, m, empty, None, 0.0, math.nan, f"NoFeasibleInit: {exc}") for m in methods]
    place_seed = placement_seed(s_place)
    out = []
    for m in methods:
        problem = replace(campaign.problem, method=m, seed=place_seed)
        try:
            run = run_placement(problem, init)
            err = None
        except RndopError as exc:
            run = getattr(exc, "run", None)
            err = f"{type(exc).__name__}: {exc}"
        t = run.elapsed if run is not None else 0.0
        rndop = run.final_max_rndop() if run is not None and run.final is not None else math.nan
        rec = TrialRecord(trial, m, init, run, t, rndop, err)
        if evaluate and err is None:
            cdf = eval_positioning(run.final, campaign, problem.mode, np.random.default_rng(s_targ))
            rec.median_error = cdf.median
        out.append(rec)
    return out


def run_campaign(campaign: McCampaign, methods=("rnd", "tr", "eig"), evaluate: bool = False, jobs: int = 1) -> CampaignResult:
    """Run every method on ``n_mc_algo`` trials with common random numbers.

    With ``evaluate`` set, each successful run also gets the median NLS error
    over ``n_targ`` targets drawn from the trial's shared target stream.
    """
    methods = tuple(methods)
    streams = trial_streams(campaign.seed, campaign.n_mc_algo)
    args = [(campaign, methods, i, st, evaluate) for i, st in enumerate(streams)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            chunks = list(ex.map(_run_trial_star, args))
    else:
        chunks = [_run_trial(*a) for a in args]
    return CampaignResult(campaign, methods, [r for c in chunks for r in c])


def _run_trial_star(a):
    return _run_trial(*a)


def select_configs(records) -> ConfigSelection:
    """Pick the 10th and 90th percentile configurations by final max RNDOP.

    Sorting is ascending and stable in trial order; good is rank
    floor(0.1 N) and bad is rank ceil(0.9 N), both 1-based.
    """
    recs = [r for r in records if r.ok]
    n = len(recs)
    if n < 10:
        raise TooFewRecords(f"need at least 10 successful records, got {n}")
    order = sorted(range(n), key=lambda i: (recs[i].final_rndop, recs[i].trial))
    i_good = math.floor(0.1 * n)
    i_bad = math.ceil(0.9 * n)
    g, b = recs[order[i_good - 1]], recs[order[i_bad - 1]]
    return ConfigSelection(i_good, g.run.final, g.final_rndop, i_bad, b.run.final, b.final_rndop)


def nearest_rank(values, pct: float) -> float:
    """Nearest-rank percentile: the ceil(pct/100 * n)-th smallest value."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("empty sample")
    rank = max(1, math.ceil(pct / 100.0 * v.size))
    return float(v[rank - 1])


def linear_fit(x, y) -> LinearFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 0.0:
        return LinearFit(float(slope), float(intercept), None)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    return LinearFit(float(slope), float(intercept), 1.0 - ss_res / ss_tot)


def timing_percentiles(times_by_na: dict):
    n_a = np.array(sorted(times_by_na), dtype=int)
    pct = {p: np.array([nearest_rank(times_by_na[n], p) for n in n_a]) for p in (10, 50, 90)}
    return n_a, pct


def timing_stats(times_by_na: dict) -> TimingStats:
    """Percentiles of t_exec per N_a and a least-squares line through each."""
    if len(times_by_na) < 3:
        raise InsufficientSweep(f"need >= 3 distinct N_a values, got {len(times_by_na)}")
    n_a, pct = timing_percentiles(times_by_na)
    fits = {p: linear_fit(n_a, pct[p]) for p in pct}
    return TimingStats(n_a, pct[10], pct[50], pct[90], fits)


def sweep_values(n_add: int) -> list:
    vals = {v for v in SWEEP_VALUES if v <= n_add}
    if n_add >= 1:
        vals.add(n_add)
    return sorted(vals)


def prefix_times(run: PlacementRun, n_values) -> dict:
    """Loop time at which the run had placed ``n`` valid anchors, for each n.

    Step seeds depend only on the master seed and the anchor count, so a run
    with ``n_add = n`` performs exactly the first steps of a longer run; its
    t_exec is the longer run's elapsed time at that point.
    """
    out = {}
    valid = 0
    for rec, t in zip(run.records, run.step_times):
        valid += rec.valid
        if valid in n_values and valid not in out:
            out[valid] = t
    return out


def times_by_na(records, n_values) -> dict:
    """Group per-trial prefix times of successful runs by N_a."""
    out = {n: [] for n in n_values}
    for r in records:
        if not r.ok:
            continue
        for n, t in prefix_times(r.run, n_values).items():
            out[n].append(t)
    return {n: v for n, v in out.items() if v}
