"""Exact DOP and the far-away range-normalized DOP (RNDOP).

Angles follow the convention ``a(theta, phi) = [cos t sin p, sin t sin p, cos p]``
with ``theta`` in [-pi, pi) and ``phi`` in [-pi/2, pi/2]; ``phi = pi/2`` is the
XY plane.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import matlin
from .errors import DegenerateGeometry, EmptyRegion, NotCentered, SingularC, SingularE

KINDS = ("xyz", "xy")
COINCIDENCE_TOL = 1e-9  # meters
FAR_AWAY_WARN = 100.0
FAR_AWAY_ORACLE = 1e4


def _check_kind(kind: str) -> None:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")


def direction(theta, phi) -> np.ndarray:
    """Unit vector(s) a(theta, phi); broadcasts, last axis has length 3."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return np.stack(
        [np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi) + 0 * theta], axis=-1
    )


def angles_of(v) -> tuple[float, float]:
    """(theta, phi) of the axis through ``v``; the sign of ``v`` is dropped."""
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    if v[2] < 0:
        v = -v
    phi = float(np.arccos(np.clip(v[2], -1.0, 1.0)))
    theta = float(np.arctan2(v[1], v[0]))
    if theta >= np.pi:
        theta -= 2 * np.pi
    return theta, phi


@dataclass(frozen=True)
class AnchorSet:
    """Ordered anchor coordinates in meters, shape (N, 3)."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 3)
        if pos.shape[0] < 3:
            raise ValueError(f"need at least 3 anchors, got {pos.shape[0]}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("anchor coordinates must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    @property
    def is_centered(self) -> bool:
        return float(np.linalg.norm(self.positions.sum(axis=0))) <= 1e-9 * len(self)

    def translated(self, delta) -> "AnchorSet":
        return AnchorSet(self.positions + np.asarray(delta, dtype=float))

    def centered(self) -> "AnchorSet":
        return AnchorSet(self.positions - self.centroid)

    def scaled(self, k: float) -> "AnchorSet":
        return AnchorSet(self.positions * k)

    def min_separation(self) -> float:
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        d = np.linalg.norm(diff, axis=-1)
        d[np.diag_indices_from(d)] = np.inf
        return float(d.min())


@dataclass(frozen=True)
class Target:
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))

    @classmethod
    def from_polar(cls, r_t: float, theta: float, phi: float) -> "Target":
        if not r_t > 0:
            raise ValueError("r_t must be positive")
        return cls(r_t * direction(theta, phi))

    @property
    def range(self) -> float:
        return float(np.linalg.norm(self.position))


@dataclass(frozen=True)
class AnchorMatrix:
    """C = sum r r' over centered anchors, with D = C^-1 and E = D[:2, :2]."""

    C: np.ndarray
    D: np.ndarray = field(repr=False)
    E: np.ndarray = field(repr=False)
    k: int

    @classmethod
    def from_c(cls, c, k: int) -> "AnchorMatrix":
        c = matlin.sym(c)
        if not matlin.is_positive_definite(c):
            raise SingularC(
                "anchor matrix C is singular (anchors coplanar through the centroid?); "
                "3D placement needs anchors spanning all three axes"
            )
        d = matlin.inv_sym(c)
        return cls(c, d, matlin.sym(d[:2, :2]), int(k))

    @classmethod
    def from_d(cls, d, k: int) -> "AnchorMatrix":
        d = matlin.sym(d)
        return cls(matlin.inv_sym(d), d, matlin.sym(d[:2, :2]), int(k))


def anchor_matrix(anchors: AnchorSet) -> AnchorMatrix:
    if not anchors.is_centered:
        raise NotCentered(f"anchor centroid {anchors.centroid} is not at the origin")
    r = anchors.positions
    return AnchorMatrix.from_c(r.T @ r, len(anchors))


def _require_e(am: AnchorMatrix) -> None:
    if not matlin.is_positive_definite(am.E):
        raise SingularE("E block is not positive definite")


def exact_dop_many(anchors, targets, kind: str = "xyz") -> np.ndarray:
    """Exact DOP for each row of ``targets`` (shape (M, 3))."""
    _check_kind(kind)
    pos = anchors.positions if isinstance(anchors, AnchorSet) else np.asarray(anchors, float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    diff = targets[:, None, :] - pos[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    if np.any(dist <= COINCIDENCE_TOL):
        raise DegenerateGeometry("target coincides with an anchor")
    h = diff / dist[..., None]
    hth = np.einsum("mni,mnj->mij", h, h)
    lam = np.linalg.eigvalsh(hth)
    if np.any(lam[:, 0] < 1e-12 * np.trace(hth, axis1=1, axis2=2)):
        raise DegenerateGeometry("H'H is numerically singular")
    q = np.linalg.inv(hth)
    if kind == "xyz":
        return np.sqrt(np.trace(q, axis1=1, axis2=2))
    return np.sqrt(q[:, 0, 0] + q[:, 1, 1])


def exact_dop(anchors: AnchorSet, target, kind: str = "xyz") -> float:
    """DOP from the full geometry matrix H (unit target-to-anchor rows)."""
    pos = target.position if isinstance(target, Target) else target
    return float(exact_dop_many(anchors, np.reshape(pos, (1, 3)), kind)[0])


def far_away_threshold(am: AnchorMatrix) -> float:
    """Range scale [N lam_min(D)]^(-1/2) beyond which the far-away laws apply."""
    lam_min = float(np.linalg.eigvalsh(am.D)[0])
    return float(1.0 / np.sqrt(am.k * lam_min))


def rndop(am: AnchorMatrix, theta, phi=np.pi / 2, kind: str = "xyz"):
    """Range-normalized DOP in direction (theta, phi); vectorized over angles."""
    _check_kind(kind)
    if kind == "xyz":
        m, a = am.D, direction(theta, phi)
    else:
        _require_e(am)
        theta = np.asarray(theta, dtype=float)
        m, a = am.E, np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    ma = a @ m
    num = np.einsum("...i,...i->...", ma, ma)
    den = np.einsum("...i,...i->...", ma, a)
    val = np.sqrt(np.maximum(np.trace(m) - num / den, 0.0))
    return float(val) if np.ndim(val) == 0 else val


def rndop_bounds(am: AnchorMatrix, kind: str = "xyz") -> tuple[float, float]:
    """Minimum and maximum RNDOP over all directions."""
    _check_kind(kind)
    if kind == "xyz":
        lam = np.linalg.eigvalsh(am.D)
        if lam[0] <= 0:
            raise SingularC("D is not positive definite")
        tr = lam.sum()
        return float(np.sqrt(tr - lam[-1])), float(np.sqrt(tr - lam[0]))
    _require_e(am)
    lam = np.linalg.eigvalsh(am.E)
    return float(np.sqrt(lam[0])), float(np.sqrt(lam[-1]))


def max_rndop(am: AnchorMatrix, kind: str = "xyz") -> float:
    return rndop_bounds(am, kind)[1]


def max_rndop_direction(am: AnchorMatrix, kind: str = "xyz") -> tuple[float, float]:
    """Angles at which the RNDOP peaks (smallest-eigenvalue axis of D or E)."""
    if kind == "xyz":
        return angles_of(matlin.eig_sym(am.D).v_min)
    v = matlin.eig_sym(am.E).v_min
    return float(np.arctan2(v[1], v[0])), float(np.pi / 2)


def weighted_rndop(
    am: AnchorMatrix,
    weight: Callable[[np.ndarray, np.ndarray], np.ndarray],
    region=((-np.pi, np.pi), (-np.pi / 2, np.pi / 2)),
    resolution: int = 64,
    kind: str = "xyz",
) -> float:
    """Midpoint-rule mean of ``weight * RNDOP`` over an angular box.

    The measure is uniform in (theta, phi), not in solid angle; pass
    ``sin(phi)``-type factors through ``weight`` for area weighting.
    ``weight`` must accept broadcast arrays of theta and phi.
    """
    (t0, t1), (p0, p1) = region
    if not (t1 > t0 and p1 > p0):
        raise EmptyRegion(f"angular region {region} is empty")
    if resolution < 8:
        raise ValueError("resolution must be at least 8 points per axis")
    t = t0 + (np.arange(resolution) + 0.5) * (t1 - t0) / resolution
    p = p0 + (np.arange(resolution) + 0.5) * (p1 - p0) / resolution
    tt, pp = np.meshgrid(t, p, indexing="ij")
    f = np.broadcast_to(np.asarray(weight(tt, pp), dtype=float), tt.shape)
    return float(np.mean(f * rndop(am, tt, pp, kind)))
