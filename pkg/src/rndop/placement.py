"""Single-anchor addition: constraints, rank-1 updates, costs and bounds.

All cost functions broadcast over leading axes of ``r`` (shape ``(..., 3)``)
so a solver can score many candidate points in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matlin
from .errors import NotCentered, SingularUpdate, ZeroFeasible
from .geometry import AnchorMatrix, AnchorSet
from .solver import SolverSettings

MODES = ("2d", "3d")
METHODS = ("rnd", "tr", "eig")


@dataclass(frozen=True)
class BoxConstraint:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(3)
        hi = np.asarray(self.upper, dtype=float).reshape(3)
        if not np.all(lo < hi):
            raise ValueError(f"box needs lower < upper componentwise, got {lo} and {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def contains(self, r, tol: float = 0.0) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return np.all((r >= self.lower - tol) & (r <= self.upper + tol), axis=-1)

    def clip(self, r) -> np.ndarray:
        return np.clip(r, self.lower, self.upper)

    def translated(self, delta) -> "BoxConstraint":
        delta = np.asarray(delta, dtype=float)
        return BoxConstraint(self.lower + delta, self.upper + delta)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))


@dataclass(frozen=True)
class SeparationConstraint:
    d_th: float

    def __post_init__(self):
        if not self.d_th >= 0:
            raise ValueError("d_th must be non-negative")

    def min_distance(self, r, existing) -> np.ndarray:
        existing = np.asarray(existing, dtype=float).reshape(-1, 3)
        r = np.asarray(r, dtype=float)
        if existing.size == 0:
            return np.full(r.shape[:-1], np.inf)
        d = np.linalg.norm(r[..., None, :] - existing, axis=-1)
        return d.min(axis=-1)


@dataclass(frozen=True)
class PlacementProblem:
    """Inputs of the iterative placement algorithms.

    ``redundancy_cap`` bounds the extra (invalid) anchors the eig driver may
    record; ``None`` means ``2 * n_add``.
    """

    mode: str = "3d"
    method: str = "tr"
    box: BoxConstraint = field(
        default_factory=lambda: BoxConstraint([-30.0, -20.0, -10.0], [30.0, 20.0, 10.0])
    )
    sep: SeparationConstraint = field(default_factory=lambda: SeparationConstraint(4.472))
    n_add: int = 20
    solver: SolverSettings = field(default_factory=SolverSettings)
    eta: float = 1.1
    n_max: int = 100
    redundancy_cap: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.n_add < 0:
            raise ValueError("n_add must be non-negative")
        if not self.eta > 1:
            raise ValueError("eta must exceed 1")

    @property
    def cap(self) -> int:
        return 2 * self.n_add if self.redundancy_cap is None else self.redundancy_cap


@dataclass(frozen=True)
class IterationBounds:
    lower: float
    upper: float


def _coef(k: int) -> float:
    return 1.0 - 1.0 / (k + 1)


def _quad(m, r):
    # r' M r for r of shape (..., n)
    return np.einsum("...i,ij,...j->...", r, m, r)


def update_c(c_k, r, k: int) -> np.ndarray:
    """Anchor matrix after adding ``r`` and re-centering ``k`` centered anchors."""
    r = np.asarray(r, dtype=float)
    return matlin.sym(np.asarray(c_k, dtype=float) + _coef(k) * np.outer(r, r))


def update_d(d_k, r, k: int) -> np.ndarray:
    return matlin.sherman_morrison_inv(d_k, r, _coef(k))


def update_e(e_k, d_k, r, k: int, literal: bool = False) -> np.ndarray:
    """2x2 block update.

    By default the numerator uses ``[D_k r]_{1:2}``, which equals the top-left
    block of :func:`update_d`. ``literal=True`` uses ``E_k r[:2]`` instead;
    the two only agree when D_k has no xz/yz coupling.
    """
    r = np.asarray(r, dtype=float)
    d_k = np.asarray(d_k, dtype=float)
    e_k = np.asarray(e_k, dtype=float)
    c = _coef(k)
    denom = 1.0 + c * float(r @ d_k @ r)
    if abs(denom) <= matlin.SM_DENOM_TOL:
        raise SingularUpdate(f"denominator {denom:.3e}")
    u = e_k @ r[:2] if literal else (d_k @ r)[:2]
    return matlin.sym(e_k - c * np.outer(u, u) / denom)


def _updated_d_batch(d_k, r, k):
    c = _coef(k)
    dr = r @ d_k
    denom = 1.0 + c * np.einsum("...i,...i->...", dr, r)
    return d_k - c * dr[..., :, None] * dr[..., None, :] / denom[..., None, None], dr, denom


def cost_rnd_3d(c_k, r, k: int, d_k=None):
    """Squared max 3D RNDOP after adding ``r``: tr(D') - lam_min(D')."""
    d_k = matlin.inv_sym(c_k) if d_k is None else d_k
    d_new, _, _ = _updated_d_batch(d_k, np.asarray(r, dtype=float), k)
    lam_min = matlin.eigvals_sym3_batch(d_new)[..., 0]
    out = np.trace(d_new, axis1=-2, axis2=-1) - lam_min
    return float(out) if np.ndim(out) == 0 else out


def cost_tr_3d(d_k, r, k: int):
    """Trace decrease score; larger means smaller tr(D_{k+1})."""
    r = np.asarray(r, dtype=float)
    dr = r @ np.asarray(d_k, dtype=float)
    out = np.einsum("...i,...i->...", dr, dr) / (1.0 + (k / (k + 1)) * np.einsum("...i,...i->...", dr, r))
    return float(out) if np.ndim(out) == 0 else out


def cost_rnd_2d(e_k, d_k, r, k: int):
    """Squared max 2D RNDOP after adding ``r``: lam_max(E_{k+1})."""
    r = np.asarray(r, dtype=float)
    d_k = np.asarray(d_k, dtype=float)
    c = _coef(k)
    dr = r @ d_k
    u = dr[..., :2]
    denom = 1.0 + c * np.einsum("...i,...i->...", dr, r)
    e_new = np.asarray(e_k, dtype=float) - c * u[..., :, None] * u[..., None, :] / denom[..., None, None]
    a, b, d = e_new[..., 0, 0], e_new[..., 0, 1], e_new[..., 1, 1]
    out = 0.5 * (a + d) + np.sqrt(0.25 * (a - d) ** 2 + b * b)
    return float(out) if np.ndim(out) == 0 else out


def cost_tr_2d(e_k, d_k, r, k: int):
    """Decrease score of tr(E_{k+1}) (projected numerator); larger is better."""
    r = np.asarray(r, dtype=float)
    dr = r @ np.asarray(d_k, dtype=float)
    u = dr[..., :2]
    out = np.einsum("...i,...i->...", u, u) / (1.0 + _coef(k) * np.einsum("...i,...i->...", dr, r))
    return float(out) if np.ndim(out) == 0 else out


def max_step_along(v, lower, upper) -> float:
    """Largest alpha >= 0 with lower <= alpha * v <= upper (origin inside)."""
    v = np.asarray(v, dtype=float)
    alpha = np.inf
    for vi, lo, hi in zip(v, lower, upper):
        if vi > 1e-15:
            alpha = min(alpha, hi / vi)
        elif vi < -1e-15:
            alpha = min(alpha, lo / vi)
    return float(max(alpha, 0.0))


def _best_ray(v, lower, upper):
    a_pos = max_step_along(v, lower, upper)
    a_neg = max_step_along(-v, lower, upper)
    if a_neg > a_pos:
        return -np.asarray(v, dtype=float), a_neg
    return np.asarray(v, dtype=float), a_pos


def eig_candidate_3d(c_k, box: BoxConstraint) -> np.ndarray:
    """Farthest feasible point along the weakest eigen-axis of C_k."""
    v = matlin.eig_sym(c_k).v_min
    v, alpha = _best_ray(v, box.lower, box.upper)
    if not alpha > 1e-12:
        raise ZeroFeasible("only alpha = 0 is feasible along the minimum eigenvector")
    return alpha * v


def eig_candidate_2d(e_k, d_k, box: BoxConstraint) -> np.ndarray:
    """XY part along the dominant eigen-axis of E_k, z minimizing the denominator."""
    v = matlin.eig_sym(e_k).v_max
    v, alpha = _best_ray(v, box.lower[:2], box.upper[:2])
    if not alpha > 1e-12:
        raise ZeroFeasible("only alpha = 0 is feasible along the maximum eigenvector of E")
    xy = alpha * v
    d_k = np.asarray(d_k, dtype=float)
    q, p = d_k[:2, 2], d_k[2, 2]
    z = float(np.clip(-(q @ xy) / p, box.lower[2], box.upper[2]))
    return np.array([xy[0], xy[1], z])


def iteration_bounds(am_k: AnchorMatrix, mode: str = "3d") -> IterationBounds:
    """Bounds on the squared max RNDOP reachable by the next single addition."""
    if mode == "3d":
        lam = np.linalg.eigvalsh(am_k.C)
        return IterationBounds(float(1 / lam[2] + 1 / lam[1]), float(1 / lam[1] + 1 / lam[0]))
    lam = np.linalg.eigvalsh(am_k.E)
    return IterationBounds(float(lam[0]), float(lam[1]))


def achieved_sq_rndop(am: AnchorMatrix, mode: str = "3d") -> float:
    """Squared max RNDOP of the current configuration."""
    if mode == "3d":
        lam = np.linalg.eigvalsh(am.D)
        return float(lam[1] + lam[2])
    return float(np.linalg.eigvalsh(am.E)[1])


def minimax_lower_bounds(anchors: AnchorSet) -> tuple[float, float]:
    """Per-unit-range lower bounds on the max 3D RNDOP.

    Returns ``(sqrt(6 / sum |r_i|^2), sqrt(6 / N) / r_max)``. The first is
    configuration specific; the second depends only on N and the largest
    anchor radius and never exceeds the first.
    """
    if not anchors.is_centered:
        raise NotCentered("lower bounds need centered anchors")
    sq = np.sum(anchors.positions**2, axis=1)
    config = np.sqrt(6.0 / sq.sum())
    universal = np.sqrt(6.0 / len(anchors)) / np.sqrt(sq.max())
    return float(config), float(universal)


def subproblem_cost(method: str, mode: str, am_k: AnchorMatrix):
    """Batched cost to *minimize* for one addition step of ``method``/``mode``."""
    k, c_k, d_k, e_k = am_k.k, am_k.C, am_k.D, am_k.E
    if method == "rnd" and mode == "3d":
        return lambda r: cost_rnd_3d(c_k, r, k, d_k=d_k)
    if method == "rnd":
        return lambda r: cost_rnd_2d(e_k, d_k, r, k)
    if method == "tr" and mode == "3d":
        return lambda r: -cost_tr_3d(d_k, r, k)
    if method == "tr":
        return lambda r: -cost_tr_2d(e_k, d_k, r, k)
    raise ValueError(f"no continuous subproblem for method {method!r}")
