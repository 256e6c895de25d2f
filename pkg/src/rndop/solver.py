"""Multistart projected quasi-Newton for the 3-variable anchor subproblem.

The separation constraints are handled by an exterior quadratic penalty
whose weight grows by ``penalty_growth`` per stage; the box is enforced by
projection. All starts advance together so each iteration costs a couple of
batched cost evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ARMIJO_C = 1e-4
LINE_SEARCH_STEPS = 14
FD_REL_STEP = 1e-5
F_REL_TOL = 1e-12


@dataclass(frozen=True)
class SolverSettings:
    multistart: int = 32
    max_iter: int = 200
    step_tol: float = 1e-8  # meters
    constraint_tol: float = 1e-9  # meters
    penalty_growth: float = 10.0
    max_stages: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.multistart < 1 or self.max_iter < 1 or self.max_stages < 1:
            raise ValueError("multistart, max_iter and max_stages must be >= 1")
        if not (self.step_tol > 0 and self.constraint_tol > 0 and self.penalty_growth > 1):
            raise ValueError("tolerances must be positive and penalty_growth > 1")


@dataclass
class StartDiagnostics:
    seed_point: np.ndarray
    seed_cost: float
    iterations: int = 0
    converged: bool = False
    violations: list = field(default_factory=list)


@dataclass
class SolveOutcome:
    point: np.ndarray
    cost: float
    feasible: bool
    starts: list

    @property
    def iterations(self) -> int:
        return sum(s.iterations for s in self.starts)


def stratified_samples(lower, upper, n: int, rng: np.random.Generator) -> np.ndarray:
    """Latin-hypercube points in the box."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    u = np.empty((n, lower.size))
    for j in range(lower.size):
        u[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return lower + u * (upper - lower)


def separation_violation(x, existing, d_th: float) -> np.ndarray:
    """max_i max(0, d_th - |x - a_i|) for each row of ``x``."""
    x = np.asarray(x, dtype=float)
    if existing.shape[0] == 0 or d_th <= 0:
        return np.zeros(x.shape[:-1])
    d = np.linalg.norm(x[..., None, :] - existing, axis=-1)
    return np.maximum(d_th - d, 0.0).max(axis=-1)


def _repair(x, existing, d_th, lower, upper, rounds: int = 12):
    # push the point radially out of violated exclusion balls, then re-clip
    x = np.array(x, dtype=float)
    target = d_th * (1.0 + 1e-12) + 1e-12
    for _ in range(rounds):
        d = np.linalg.norm(existing - x, axis=1)
        bad = np.flatnonzero(d < d_th)
        if bad.size == 0:
            return x
        i = bad[np.argmin(d[bad])]
        off = x - existing[i]
        n = np.linalg.norm(off)
        u = off / n if n > 0 else np.array([1.0, 0.0, 0.0])
        x = np.clip(existing[i] + target * u, lower, upper)
    return x


def _project_direction(x, d, lower, upper):
    # freeze coordinates sitting on a bound whose direction points outward
    at_lo = (x <= lower) & (d < 0)
    at_hi = (x >= upper) & (d > 0)
    return np.where(at_lo | at_hi, 0.0, d)


def _bfgs_stage(fun, x, lower, upper, h_fd, settings, iters_left):
    """Run batched projected BFGS on every row of ``x``; returns (x, iters, converged)."""
    m, n = x.shape
    eye = np.eye(n)
    offsets = np.concatenate([np.eye(n), -np.eye(n)]) * h_fd

    def grad(pts):
        probe = pts[:, None, :] + offsets[None, :, :]
        vals = fun(probe.reshape(-1, n)).reshape(pts.shape[0], 2 * n)
        return (vals[:, :n] - vals[:, n:]) / (2 * h_fd)

    active = np.ones(m, dtype=bool)
    iters = np.zeros(m, dtype=int)
    converged = np.zeros(m, dtype=bool)
    f = fun(x)
    g = grad(x)
    box_diag = float(np.linalg.norm(upper - lower))
    gn = np.linalg.norm(g, axis=1)
    hinv = eye[None] * (0.1 * box_diag / np.maximum(gn, 1e-300))[:, None, None]
    ts = 0.5 ** np.arange(LINE_SEARCH_STEPS)

    for _ in range(iters_left):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        m_act = idx.size
        xa, fa, ga, ha = x[idx], f[idx], g[idx], hinv[idx]
        d = -np.einsum("mij,mj->mi", ha, ga)
        d = _project_direction(xa, d, lower, upper)
        slope = np.einsum("mi,mi->m", ga, d)
        bad = ~(slope < 0)
        if bad.any():
            scale = 0.1 * box_diag / np.maximum(np.linalg.norm(ga[bad], axis=1), 1e-300)
            ha[bad] = eye[None] * scale[:, None, None]
            d[bad] = _project_direction(xa[bad], -ga[bad] * scale[:, None], lower, upper)
        cand = np.clip(xa[:, None, :] + ts[None, :, None] * d[:, None, :], lower, upper)
        fc = fun(cand.reshape(-1, n)).reshape(m_act, ts.size)
        dec = np.einsum("mi,mli->ml", ga, cand - xa[:, None, :])
        ok = (fc <= fa[:, None] + ARMIJO_C * dec) & (fc < fa[:, None])
        any_ok = ok.any(axis=1)
        first = np.argmax(ok, axis=1)
        rows = np.arange(m_act)
        xn = np.where(any_ok[:, None], cand[rows, first], xa)
        fn = np.where(any_ok, fc[rows, first], fa)
        step = np.linalg.norm(xn - xa, axis=1)
        iters[idx] += 1
        stalled = (fa - fn) <= F_REL_TOL * np.maximum(np.abs(fa), 1e-300)
        done = (~any_ok) | (step < settings.step_tol) | stalled
        # gradients only where we move on
        gn_ = ga.copy()
        move = ~done
        if move.any():
            gn_[move] = grad(xn[move])
            s = xn[move] - xa[move]
            y = gn_[move] - ga[move]
            sy = np.einsum("mi,mi->m", s, y)
            upd = sy > 1e-12 * np.linalg.norm(s, axis=1) * np.linalg.norm(y, axis=1)
            hm = ha[move]
            if upd.any():
                su, yu, syu, hu = s[upd], y[upd], sy[upd], hm[upd]
                rho = 1.0 / syu
                a = eye[None] - rho[:, None, None] * su[:, :, None] * yu[:, None, :]
                hu = a @ hu @ a.transpose(0, 2, 1) + rho[:, None, None] * su[:, :, None] * su[:, None, :]
                hm[upd] = hu
            ha[move] = hm
        x[idx], f[idx], g[idx], hinv[idx] = xn, fn, gn_, ha
        converged[idx[done]] = True
        active[idx[done]] = False
    return x, iters, converged


def solve_anchor_subproblem(
    cost: Callable[[np.ndarray], np.ndarray],
    box,
    existing,
    sep,
    settings: SolverSettings = SolverSettings(),
    warm_starts: Sequence = (),
) -> SolveOutcome:
    """Minimize ``cost`` over the box subject to min-distance to ``existing``.

    ``cost`` maps an ``(M, 3)`` array to ``(M,)`` values. Returns the best
    feasible point found over all starts (seed points included). When no
    candidate is feasible, ``feasible`` is False and the least-violating
    point is returned; the caller decides whether that is fatal.
    """
    lower, upper = np.asarray(box.lower, float), np.asarray(box.upper, float)
    existing = np.asarray(existing, dtype=float).reshape(-1, 3)
    d_th = float(sep.d_th)
    rng = np.random.default_rng(settings.seed)
    seeds = stratified_samples(lower, upper, settings.multistart, rng)
    if len(warm_starts):
        warm = np.clip(np.asarray(warm_starts, dtype=float).reshape(-1, 3), lower, upper)
        seeds = np.vstack([seeds, warm])
    f_seed = np.asarray(cost(seeds), dtype=float)
    starts = [StartDiagnostics(p.copy(), float(c)) for p, c in zip(seeds, f_seed)]

    h_fd = FD_REL_STEP * float(np.linalg.norm(upper - lower))
    constrained = existing.shape[0] > 0 and d_th > 0
    scale = max(float(np.median(np.abs(f_seed))), 1e-300)
    mu = scale / max(d_th, 1e-12) ** 2

    x = seeds.copy()
    viol = separation_violation(x, existing, d_th)
    for s, v in zip(starts, viol):
        s.violations.append(float(v))
    todo = np.ones(len(x), dtype=bool)
    for _stage in range(settings.max_stages if constrained else 1):
        idx = np.flatnonzero(todo)
        if idx.size == 0:
            break
        mu_now = mu

        def fun(pts, mu_now=mu_now):
            val = np.asarray(cost(pts), dtype=float)
            if constrained:
                d = np.linalg.norm(pts[:, None, :] - existing[None], axis=-1)
                val = val + mu_now * np.sum(np.maximum(d_th - d, 0.0) ** 2, axis=1)
            return val

        budget = settings.max_iter
        xs, it, conv = _bfgs_stage(fun, x[idx].copy(), lower, upper, h_fd, settings, budget)
        raw = separation_violation(xs, existing, d_th)
        if constrained:
            # a penalty minimizer sits just inside the ball; repair before comparing
            xs = np.array([_repair(p, existing, d_th, lower, upper) for p in xs])
        v_new = separation_violation(xs, existing, d_th)
        for j, i in enumerate(idx):
            starts[i].iterations += int(it[j])
            starts[i].converged = bool(conv[j])
            prev = starts[i].violations[-1]
            if v_new[j] <= prev:
                x[i] = xs[j]
                starts[i].violations.append(float(v_new[j]))
            else:
                starts[i].violations.append(prev)
        if not constrained:
            break
        # keep raising the weight while the penalty minimizer is still noticeably inside a ball
        todo[:] = False
        todo[idx] = raw > settings.constraint_tol
        mu *= settings.penalty_growth

    if constrained:
        x = np.array([_repair(p, existing, d_th, lower, upper) for p in x])
    cand = np.vstack([x, seeds])
    fc = np.asarray(cost(cand), dtype=float)
    vc = separation_violation(cand, existing, d_th)
    feas = (vc <= settings.constraint_tol) & np.all((cand >= lower) & (cand <= upper), axis=1)
    if feas.any():
        pool = np.flatnonzero(feas)
        order = np.lexsort((cand[pool, 2], cand[pool, 1], cand[pool, 0], fc[pool]))
        best = pool[order[0]]
        return SolveOutcome(cand[best].copy(), float(fc[best]), True, starts)
    order = np.lexsort((cand[:, 2], cand[:, 1], cand[:, 0], fc, vc))
    best = order[0]
    return SolveOutcome(cand[best].copy(), float(fc[best]), False, starts)
