"""Dense symmetric linear algebra: Jacobi eigensolver, PSD square root,
masked Pearson correlation and correlation-matrix repair."""

from __future__ import annotations

import numpy as np

from dualecc._backend import kernels
from dualecc.errors import ConvergenceError, NotPSDError, ValidationError

EIG_TOL = 1e-12
MAX_SWEEPS = 100
NEG_EIG_TOL = 1e-8


def as_symmetric(A, rtol: float = 1e-12) -> np.ndarray:
    """Validate ``A`` as a finite, square, symmetric float64 matrix.

    Returns a C-contiguous copy.
    """
    A = np.array(A, dtype=np.float64, copy=True, order="C")
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError("matrix has non-finite entries")
    scale = max(float(np.max(np.abs(A))), 1.0) if A.size else 1.0
    if np.max(np.abs(A - A.T), initial=0.0) > rtol * scale:
        raise ValidationError("matrix is not symmetric")
    return A


def eigh(A, tol: float = EIG_TOL, max_sweeps: int = MAX_SWEEPS):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    A : array_like
        Symmetric ``T x T`` matrix.
    tol : float
        Stop when the off-diagonal Frobenius norm drops below ``tol * ||A||_F``.
    max_sweeps : int
        Iteration cap; exceeding it raises :class:`ConvergenceError`.

    Returns
    -------
    U : ndarray
        Orthogonal matrix whose columns are eigenvectors.
    lam : ndarray
        Eigenvalues in ascending order.
    """
    A = as_symmetric(A)
    if A.shape[0] == 0:
        return np.zeros((0, 0)), np.zeros(0)
    w, V, sweeps, off = kernels.jacobi_eigh(A, tol, max_sweeps)
    norm = float(np.linalg.norm(A))
    if off > tol * norm:
        resid = float(np.linalg.norm(V @ np.diag(w) @ V.T - A))
        raise ConvergenceError(
            f"Jacobi did not converge in {sweeps} sweeps "
            f"(off-diagonal norm {off:.3e}, reconstruction residual {resid:.3e})"
        )
    return np.asarray(V), np.asarray(w)


def is_identity(A) -> bool:
    A = np.asarray(A)
    return A.ndim == 2 and A.shape[0] == A.shape[1] and np.array_equal(A, np.eye(A.shape[0]))


def sqrt_psd(A, neg_tol: float = NEG_EIG_TOL) -> np.ndarray:
    """Principal square root ``U diag(sqrt(lam)) U^T`` of a PSD matrix.

    Eigenvalues in ``[-neg_tol, 0)`` are clipped to zero; anything more
    negative raises :class:`NotPSDError`. The identity maps to itself exactly.
    """
    A = as_symmetric(A)
    if is_identity(A):
        return np.eye(A.shape[0])
    U, lam = eigh(A)
    if lam.size and lam[0] < -neg_tol:
        raise NotPSDError(f"smallest eigenvalue {lam[0]:.3e} below -{neg_tol:g}")
    S = (U * np.sqrt(np.clip(lam, 0.0, None))) @ U.T
    return 0.5 * (S + S.T)


def pearson(u, v, mask=None) -> float | None:
    """Product-moment correlation of ``u`` and ``v`` over the valid pairs.

    ``mask`` selects the usable pairs; pairs where either value is NaN are
    dropped as well. Returns ``None`` when fewer than two pairs remain or
    either variance is zero, so the caller can apply its own fallback.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValidationError(f"shape mismatch {u.shape} vs {v.shape}")
    ok = np.isfinite(u) & np.isfinite(v)
    if mask is not None:
        ok &= np.asarray(mask, dtype=bool)
    if ok.sum() < 2:
        return None
    du = u[ok] - u[ok].mean()
    dv = v[ok] - v[ok].mean()
    su = float(du @ du)
    sv = float(dv @ dv)
    if su <= 0.0 or sv <= 0.0:
        return None
    r = float(du @ dv) / np.sqrt(su * sv)
    return float(min(1.0, max(-1.0, r)))


def repair_correlation(R, floor: float = 1e-8) -> np.ndarray:
    """Nearest-ish valid correlation matrix by eigenvalue clipping.

    Eigenvalues below ``floor`` are raised to ``floor``, the matrix is
    rebuilt, and rows/columns are rescaled back to a unit diagonal.
    Matrices that are already PSD with a unit diagonal come back unchanged.
    """
    R = as_symmetric(R)
    if is_identity(R):
        return R
    U, lam = eigh(R)
    if lam[0] >= floor and np.allclose(np.diag(R), 1.0, rtol=0.0, atol=1e-15):
        return R
    lam = np.maximum(lam, floor)
    B = (U * lam) @ U.T
    d = 1.0 / np.sqrt(np.diag(B))
    B = B * d[:, None] * d[None, :]
    B = 0.5 * (B + B.T)
    np.fill_diagonal(B, 1.0)
    return B
