"""Small dense symmetric linear algebra (2x2 and 3x3).

Matrices are plain ``numpy`` arrays. :func:`sym` mirrors the upper
triangle so every matrix produced here is exactly symmetric.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import NonFinite, NonPositiveTrace, NotPositiveDefinite, SingularUpdate

PD_RTOL = 1e-12
SM_DENOM_TOL = 1e-14
_SIGN_TOL = 1e-12


class EigDecomp(NamedTuple):
    """Ascending eigenvalues and matching unit eigenvectors (columns)."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def lam_min(self) -> float:
        return float(self.values[0])

    @property
    def lam_max(self) -> float:
        return float(self.values[-1])

    @property
    def v_min(self) -> np.ndarray:
        return self.vectors[:, 0]

    @property
    def v_max(self) -> np.ndarray:
        return self.vectors[:, -1]

    def reconstruct(self) -> np.ndarray:
        return sym((self.vectors * self.values) @ self.vectors.T)


class GeneralizedExtremes(NamedTuple):
    lam_min: float
    lam_max: float
    v_min: np.ndarray
    v_max: np.ndarray
    y_inv_sqrt: np.ndarray

    def maximizer(self) -> np.ndarray:
        """Direction w attaining the maximal Rayleigh quotient w'Xw / w'Yw."""
        w = self.y_inv_sqrt @ self.v_max
        return w / np.linalg.norm(w)

    def minimizer(self) -> np.ndarray:
        w = self.y_inv_sqrt @ self.v_min
        return w / np.linalg.norm(w)


def sym(a) -> np.ndarray:
    """Return the symmetric matrix defined by the upper triangle of ``a``."""
    a = np.array(a, dtype=float)
    upper = np.triu(a)
    return upper + np.triu(a, 1).T


def _check_finite(a: np.ndarray) -> None:
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix has NaN or Inf entries")


def _jacobi(a: np.ndarray, max_sweeps: int = 64) -> tuple[np.ndarray, np.ndarray]:
    # Cyclic Jacobi: zero each off-diagonal entry in turn until the
    # off-diagonal mass is negligible relative to the diagonal.
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[p, q] ** 2 for p in range(n) for q in range(p + 1, n)))
        if off <= 1e-18 * float(np.linalg.norm(a)) or off < 1e-300:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                # hypot avoids overflowing theta**2 when apq is tiny
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                a[p, q] = a[q, p] = 0.0
                v = v @ rot
    return np.diag(a).copy(), v


def eig_sym(a) -> EigDecomp:
    """Eigen-decomposition of a real symmetric 2x2 or 3x3 matrix.

    Eigenvalues are ascending. Each eigenvector is flipped so that its first
    component with magnitude above 1e-12 is positive.
    """
    a = sym(a)
    if a.shape not in ((2, 2), (3, 3)):
        raise ValueError(f"expected a 2x2 or 3x3 matrix, got {a.shape}")
    _check_finite(a)
    values, vectors = _jacobi(a)
    order = np.argsort(values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]
    # one Gram-Schmidt pass keeps orthonormality at the 1e-15 level
    q, _ = np.linalg.qr(vectors)
    vectors = q * np.sign(np.sum(q * vectors, axis=0))
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        nz = np.flatnonzero(np.abs(col) > _SIGN_TOL)
        if nz.size and col[nz[0]] < 0:
            vectors[:, j] = -col
    return EigDecomp(values, vectors)


def is_positive_definite(a) -> bool:
    """Scale-relative test: smallest eigenvalue > 1e-12 * max(1, tr)."""
    a = sym(a)
    lam = np.linalg.eigvalsh(a)
    return bool(lam[0] > PD_RTOL * max(1.0, float(np.trace(a))))


def sherman_morrison_inv(x_inv, y, scale: float = 1.0) -> np.ndarray:
    """Inverse of ``X + scale * y y'`` given ``X^{-1}``."""
    x_inv = sym(x_inv)
    y = np.asarray(y, dtype=float)
    xy = x_inv @ y
    denom = 1.0 + scale * float(y @ xy)
    if abs(denom) <= SM_DENOM_TOL:
        raise SingularUpdate(f"rank-1 update denominator {denom:.3e} is zero")
    return sym(x_inv - scale * np.outer(xy, xy) / denom)


def inv_sqrt_spd(y) -> np.ndarray:
    y = sym(y)
    ed = eig_sym(y)
    if ed.lam_min <= PD_RTOL * max(1.0, float(np.trace(y))):
        raise NotPositiveDefinite(f"smallest eigenvalue {ed.lam_min:.3e}")
    return sym((ed.vectors / np.sqrt(ed.values)) @ ed.vectors.T)


def generalized_eig_extremes(x, y) -> GeneralizedExtremes:
    """Extreme eigenpairs of ``Y^{-1/2} X Y^{-1/2}``.

    The returned vectors are eigenvectors of that symmetric pencil
    reduction; use :meth:`GeneralizedExtremes.maximizer` for the direction
    that maximizes ``w'Xw / w'Yw``.
    """
    x = sym(x)
    _check_finite(x)
    y_is = inv_sqrt_spd(y)
    ed = eig_sym(y_is @ x @ y_is)
    return GeneralizedExtremes(ed.lam_min, ed.lam_max, ed.v_min, ed.v_max, y_is)


def interlacing_check(before: EigDecomp, after: EigDecomp, epsilon: float, tol: float = 1e-9) -> bool:
    """Check the rank-1 eigenvalue interlacing chains for ``Y = X + eps w w'``.

    ``before`` decomposes X, ``after`` decomposes Y, and ``w`` is a unit
    vector. The lower end of the eps < 0 chain is ``lam_1(X) + eps``.
    """
    if epsilon == 0:
        return True
    lx = np.asarray(before.values, dtype=float)
    ly = np.asarray(after.values, dtype=float)
    n = lx.size
    if epsilon > 0:
        ok = all(lx[i] - tol <= ly[i] for i in range(n))
        ok &= all(ly[i] <= lx[i + 1] + tol for i in range(n - 1))
        ok &= ly[-1] <= lx[-1] + epsilon + tol
    else:
        ok = all(ly[i] <= lx[i] + tol for i in range(n))
        ok &= all(lx[i] - tol <= ly[i + 1] for i in range(n - 1))
        ok &= lx[0] + epsilon - tol <= ly[0]
    # the eigenvalue shifts must sum to epsilon
    ok &= abs(float(np.sum(ly - lx)) - epsilon) <= tol * max(1.0, abs(epsilon), float(np.abs(lx).sum()))
    return bool(ok)


def trace_constrained_optimum(k: float) -> float:
    """Minimum of tr(X^-1) - lam_min(X^-1) over 3x3 SPD X with tr(X) = k."""
    if not k > 0:
        raise NonPositiveTrace(f"trace must be positive, got {k}")
    return 6.0 / k


def inv_sym(a) -> np.ndarray:
    return sym(np.linalg.inv(sym(a)))


def eigvals_sym3_batch(a: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a stack of symmetric 3x3 matrices.

    Trigonometric closed form, used on hot paths where ``eig_sym`` would be
    too slow. Accuracy is ~1e-12 relative except near triple roots.
    """
    a = np.asarray(a, dtype=float)
    a00, a11, a22 = a[..., 0, 0], a[..., 1, 1], a[..., 2, 2]
    a01, a02, a12 = a[..., 0, 1], a[..., 0, 2], a[..., 1, 2]
    q = (a00 + a11 + a22) / 3.0
    b00, b11, b22 = a00 - q, a11 - q, a22 - q
    p2 = b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * (a01 * a01 + a02 * a02 + a12 * a12)
    p = np.sqrt(p2 / 6.0)
    safe = np.where(p > 0, p, 1.0)
    det = (
        b00 * (b11 * b22 - a12 * a12)
        - a01 * (a01 * b22 - a12 * a02)
        + a02 * (a01 * a12 - b11 * a02)
    )
    r = np.clip(det / (2.0 * safe**3), -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    hi = q + 2.0 * p * np.cos(phi)
    lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    mid = 3.0 * q - hi - lo
    return np.stack([lo, mid, hi], axis=-1)
