"""Range simulation and nonlinear least-squares position fixes.

Fixes are batched: ``nls_fix_many`` solves M independent problems that share
one anchor set, advancing all of them in lock-step Levenberg iterations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import AnchorSet, exact_dop_many

MAX_ITER = 100
GRAD_TOL = 1e-9
_DIST_FLOOR = 1e-12


@dataclass(frozen=True)
class RangeModel:
    """Additive Gaussian ranging error with mean ``b`` and deviation ``sigma_w`` (meters)."""

    b: float = 1.0
    sigma_w: float = 6.0

    def __post_init__(self):
        if not (self.b >= 0 and self.sigma_w >= 0):
            raise ValueError("bias and sigma_w must be non-negative")


@dataclass(frozen=True)
class FixResult:
    position: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class FixBatch:
    """Vectorized counterpart of :class:`FixResult` (leading axis = target)."""

    positions: np.ndarray
    residual_norms: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray

    def __len__(self) -> int:
        return self.positions.shape[0]

    def __getitem__(self, i) -> FixResult:
        return FixResult(
            self.positions[i].copy(),
            float(self.residual_norms[i]),
            int(self.iterations[i]),
            bool(self.converged[i]),
        )


def _positions(anchors) -> np.ndarray:
    return anchors.positions if isinstance(anchors, AnchorSet) else np.asarray(anchors, float)


def simulate_ranges_many(anchors, targets, model: RangeModel, rng: np.random.Generator) -> np.ndarray:
    """Measured ranges max(0, |a_i - t| + w), shape (M, N) for M targets."""
    pos = _positions(anchors)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    true = np.linalg.norm(targets[:, None, :] - pos[None], axis=-1)
    w = model.b + model.sigma_w * rng.standard_normal(true.shape)
    return np.maximum(true + w, 0.0)


def simulate_ranges(anchors, target, model: RangeModel, rng: np.random.Generator) -> np.ndarray:
    return simulate_ranges_many(anchors, np.reshape(target, (1, 3)), model, rng)[0]


def _embed(x: np.ndarray, mode: str) -> np.ndarray:
    if mode == "3d":
        return x
    return np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], axis=-1)


def _residuals(pos, ranges, x, mode):
    diff = _embed(x, mode)[:, None, :] - pos[None]
    dist = np.maximum(np.linalg.norm(diff, axis=-1), _DIST_FLOOR)
    res = ranges - dist
    # d res / d x = -unit(x - a_i), restricted to the free coordinates
    jac = -(diff / dist[..., None])[..., : x.shape[-1]]
    return res, jac


def _lm(pos, ranges, x0, mode, max_iter, grad_tol):
    x = np.array(x0, dtype=float)
    m, n = x.shape
    res, jac = _residuals(pos, ranges, x, mode)
    cost = np.einsum("mi,mi->m", res, res)
    grad = np.einsum("mij,mi->mj", jac, res)
    jtj = np.einsum("mij,mik->mjk", jac, jac)
    lam = 1e-3 * np.max(np.diagonal(jtj, axis1=1, axis2=2), axis=1)
    iters = np.zeros(m, dtype=int)
    # tolerance scales with the residual so noisy fixes can meet it at the rounding floor
    tol_scale = grad_tol * np.sqrt(pos.shape[0])
    converged = np.linalg.norm(grad, axis=1) <= tol_scale * np.maximum(1.0, np.sqrt(cost))
    active = ~converged
    eye = np.eye(n)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        a = jtj[idx] + lam[idx, None, None] * eye
        step = -np.linalg.solve(a, grad[idx][..., None])[..., 0]
        xn = x[idx] + step
        rn, jn = _residuals(pos, ranges[idx], xn, mode)
        cn = np.einsum("mi,mi->m", rn, rn)
        ok = cn <= cost[idx]
        iters[idx] += 1
        acc = idx[ok]
        if acc.size:
            x[acc] = xn[ok]
            cost[acc] = cn[ok]
            grad[acc] = np.einsum("mij,mi->mj", jn[ok], rn[ok])
            jtj[acc] = np.einsum("mij,mik->mjk", jn[ok], jn[ok])
        lam[idx] = np.where(ok, lam[idx] / 3.0, lam[idx] * 4.0)
        gnorm = np.linalg.norm(grad[idx], axis=1)
        converged[idx] = gnorm <= tol_scale * np.maximum(1.0, np.sqrt(cost[idx]))
        small = np.linalg.norm(step, axis=1) <= 1e-14 * (1.0 + np.linalg.norm(x[idx], axis=1))
        active[idx] = ~(converged[idx] | (ok & small) | (lam[idx] > 1e20))
    return x, np.sqrt(cost), iters, converged


def linear_multilateration(anchors, ranges, mode: str = "3d") -> np.ndarray:
    """Closed-form fix from differenced squared ranges, shape (M, 3) or (M, 2)."""
    pos = _positions(anchors)
    ranges = np.atleast_2d(np.asarray(ranges, dtype=float))
    dims = 3 if mode == "3d" else 2
    a = 2.0 * (pos[1:, :dims] - pos[0, :dims])
    sq = np.sum(pos**2, axis=1)
    rhs = (sq[1:] - sq[0])[None] - ranges[:, 1:] ** 2 + ranges[:, :1] ** 2
    sol, *_ = np.linalg.lstsq(a, rhs.T, rcond=None)
    return sol.T


def _check(pos, mode):
    if mode not in ("2d", "3d"):
        raise ValueError("mode must be '2d' or '3d'")
    need = 4 if mode == "3d" else 3
    if pos.shape[0] < need:
        raise ValueError(f"{mode} fixes need at least {need} anchors")


def nls_fix_many(
    anchors,
    ranges,
    mode: str = "3d",
    initial=None,
    max_iter: int = MAX_ITER,
    grad_tol: float = GRAD_TOL,
    fallback: bool = True,
) -> FixBatch:
    """Least-squares fixes for each row of ``ranges`` (shape (M, N)).

    In 2D mode the target height is known to be zero and only (x, y) is
    estimated. With ``fallback`` set, a second run starts from the linear
    multilateration solution and the better of the two is kept (converged
    first, then smaller residual); this also catches convergence to mirror
    minima, which the convergence flag alone cannot detect. Convergence
    means ``|J'r| <= grad_tol * sqrt(N) * max(1, |r|)``.
    """
    pos = _positions(anchors)
    _check(pos, mode)
    ranges = np.atleast_2d(np.asarray(ranges, dtype=float))
    dims = 3 if mode == "3d" else 2
    if initial is None:
        x0 = np.zeros((ranges.shape[0], dims))
    else:
        x0 = np.broadcast_to(np.asarray(initial, dtype=float)[..., :dims], (ranges.shape[0], dims))
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial guess must be finite")
    x, rn, it, conv = _lm(pos, ranges, x0, mode, max_iter, grad_tol)
    if fallback:
        xl = linear_multilateration(pos, ranges, mode)
        x2, rn2, it2, conv2 = _lm(pos, ranges, xl, mode, max_iter, grad_tol)
        better = (conv2 & ~conv) | ((conv2 == conv) & (rn2 < rn))
        x[better], rn[better], conv[better] = x2[better], rn2[better], conv2[better]
        it += it2
    return FixBatch(_embed(x, mode), rn, it, conv)


def nls_fix(anchors, ranges, mode: str = "3d", initial=None, **kw) -> FixResult:
    """Single-target wrapper around :func:`nls_fix_many`; position is always 3D."""
    ranges = np.reshape(np.asarray(ranges, dtype=float), (1, -1))
    init = None if initial is None else np.reshape(np.asarray(initial, dtype=float), (1, -1))
    return nls_fix_many(anchors, ranges, mode, init, **kw)[0]


def position_error_bound(anchors, targets, model: RangeModel, kind: str = "xyz") -> np.ndarray:
    """sqrt(b^2 + sigma_w^2) times the exact DOP at each target."""
    return np.sqrt(model.b**2 + model.sigma_w**2) * exact_dop_many(anchors, targets, kind)
