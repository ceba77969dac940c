"""Scenario reconstruction with empirical copulas.

All methods share one mechanism: compute the row-wise ranks of a template
and hand scenario ``i`` the ``rank``-th calibrated quantile at each lead
time. They differ only in the template:

* ``ecc``: the raw ensemble.
* ``decc``: the raw ensemble plus ECC corrections recoloured by the square
  root of the error correlation matrix.
* ``climatological_template``: randomly drawn past observed trajectories.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np

from dualecc import linalg
from dualecc.core import ScenarioSet, as_matrix, compute_ranks, reorder_by_ranks
from dualecc.errors import NotPSDError, ValidationError

log = logging.getLogger(__name__)

MIN_PAIRS = 15
PSD_FLOOR = 1e-8


def _pair(q, raw):
    qv = np.asarray(as_matrix(q), dtype=np.float64)
    xv = np.asarray(as_matrix(raw), dtype=np.float64)
    if qv.ndim != 2 or qv.shape != xv.shape:
        raise ValidationError(f"quantiles {qv.shape} and raw ensemble {xv.shape} differ in shape")
    return qv, xv


def ecc(q, raw, tie_policy: str = "random", rng=None) -> ScenarioSet:
    """Ensemble copula coupling: reorder ``q`` by the raw-ensemble ranks."""
    qv, xv = _pair(q, raw)
    ranks = compute_ranks(xv, tie_policy, rng)
    return ScenarioSet(reorder_by_ranks(qv, ranks), "ecc")


def decc(q, raw, Re, tie_policy: str = "random", rng=None, details: bool = False):
    """Dual ensemble copula coupling.

    1. ECC scenarios ``xt`` from the raw ranks.
    2. Corrections ``c = xt - x`` per member.
    3. Adjusted corrections ``Re^(1/2) c``.
    4. Adjusted ensemble ``x + Re^(1/2) c``.
    5. ECC again with the adjusted ensemble as template.

    With ``details=True`` also returns a dict of the intermediate matrices.
    """
    qv, xv = _pair(q, raw)
    T = qv.shape[0]
    Re = linalg.as_symmetric(Re)
    if Re.shape != (T, T):
        raise ValidationError(f"error correlation matrix is {Re.shape}, expected {(T, T)}")
    if not np.allclose(np.diag(Re), 1.0, rtol=0.0, atol=1e-10):
        raise ValidationError("error correlation matrix must have a unit diagonal")
    if rng is None:
        rng = np.random.default_rng(0)

    x_ecc = ecc(qv, xv, tie_policy, rng).values
    corr = x_ecc - xv
    root = linalg.sqrt_psd(Re, neg_tol=PSD_FLOOR)
    if linalg.is_identity(root):
        corr_adj = corr
    else:
        corr_adj = root @ corr
    x_adj = xv + corr_adj
    ranks = compute_ranks(x_adj, tie_policy, rng)
    out = ScenarioSet(reorder_by_ranks(qv, ranks), "decc")
    if details:
        return out, {
            "ecc": x_ecc,
            "corrections": corr,
            "adjusted_corrections": corr_adj,
            "adjusted_ensemble": x_adj,
            "ranks": ranks,
        }
    return out


def climatological_template(q, history, rng=None) -> ScenarioSet:
    """Schaake-style coupling with randomly drawn past observed trajectories.

    ``history`` is a list of :class:`ObservationSeries` or of length-T
    vectors; only complete trajectories are eligible.
    """
    qv = np.asarray(as_matrix(q), dtype=np.float64)
    T, N = qv.shape
    pool = []
    for item in history:
        if hasattr(item, "values") and isinstance(item.values, dict):
            pool.extend(v for _, v in sorted(item.values.items()) if not np.any(np.isnan(v)))
        else:
            v = np.asarray(item, dtype=np.float64)
            if not np.any(np.isnan(v)):
                pool.append(v)
    if len(pool) < N:
        raise ValidationError(f"need at least {N} complete historical trajectories, found {len(pool)}")
    if len(pool) == N:
        chosen = pool
    else:
        if rng is None:
            rng = np.random.default_rng(0)
        idx = np.sort(rng.choice(len(pool), size=N, replace=False))
        chosen = [pool[i] for i in idx]
    z = np.column_stack(chosen)
    if z.shape[0] != T:
        raise ValidationError(f"historical trajectories have length {z.shape[0]}, expected {T}")
    ranks = compute_ranks(z, "random", rng if rng is not None else np.random.default_rng(0))
    return ScenarioSet(reorder_by_ranks(qv, ranks), "climatological-template")


def estimate_error_correlation(errors, min_pairs: int = MIN_PAIRS, floor: float = PSD_FLOOR) -> np.ndarray:
    """Correlation matrix of ensemble-mean errors across lead times.

    Parameters
    ----------
    errors : array_like or TrainingWindow
        ``D x T`` matrix of errors ``y - m(x)`` (NaN where missing), or a
        training window exposing ``errors``.
    min_pairs : int
        Entries estimated from fewer overlapping days are shrunk towards 0
        by the factor ``n_pairs / min_pairs``.

    Returns
    -------
    ndarray (T x T)
        Symmetric, unit diagonal, positive semidefinite after eigenvalue
        clipping at ``floor``.
    """
    E = np.asarray(getattr(errors, "errors", errors), dtype=np.float64)
    if E.ndim != 2:
        raise ValidationError(f"errors must be D x T, got shape {E.shape}")
    T = E.shape[1]
    R = np.eye(T)
    valid = np.isfinite(E)
    undefined = []
    for i in range(T):
        for j in range(i + 1, T):
            both = valid[:, i] & valid[:, j]
            n = int(both.sum())
            r = linalg.pearson(E[:, i], E[:, j], both)
            if r is None:
                undefined.append((i, j))
                r = 0.0
            elif n < min_pairs:
                r *= n / min_pairs
            R[i, j] = R[j, i] = r
    if undefined:
        msg = f"{len(undefined)} error-correlation entries undefined (zero variance or < 2 pairs), set to 0"
        log.warning(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    short = [
        (i, j) for i in range(T) for j in range(i + 1, T)
        if int((valid[:, i] & valid[:, j]).sum()) < min_pairs
    ]
    if short and len(short) > len(undefined):
        log.warning("%d error-correlation entries from fewer than %d pairs, shrunk", len(short), min_pairs)
    return linalg.repair_correlation(R, floor=floor)


def lagged_correlation(R) -> np.ndarray:
    """Mean correlation at each lag ``k = 1..T-1`` (mean of the k-th diagonal)."""
    R = np.asarray(R, dtype=np.float64)
    T = R.shape[0]
    return np.array([np.mean(np.diagonal(R, offset=k)) for k in range(1, T)])


def covariance_decomposition(raw, corrections, t1: int, t2: int) -> dict:
    """Split the post-processed member covariance between two lead times.

    ``k = cov(x + c)`` is written as ``cov(x) + cov(c) + eps`` where ``eps``
    collects both cross-covariances of raw members and corrections. Lead
    times are 0-based row indices. Terms at a lead time with zero spread are
    reported as 0 and flagged.
    """
    if t1 == t2:
        raise ValidationError("covariance decomposition needs two distinct lead times")
    x = np.asarray(as_matrix(raw), dtype=np.float64)
    c = np.asarray(as_matrix(corrections), dtype=np.float64)
    if x.shape != c.shape:
        raise ValidationError(f"raw {x.shape} and corrections {c.shape} differ in shape")
    N = x.shape[1]

    def cov(u, v):
        return float(np.sum((u - u.mean()) * (v - v.mean())) / (N - 1))

    xt = x + c
    k_hat = cov(xt[t1], xt[t2])
    flags = []
    if np.ptp(x[t1]) == 0 or np.ptp(x[t2]) == 0:
        raw_term = 0.0
        flags.append("raw-zero-variance")
    else:
        raw_term = cov(x[t1], x[t2])
    if np.ptp(c[t1]) == 0 or np.ptp(c[t2]) == 0:
        corr_term = 0.0
        flags.append("correction-zero-variance")
    else:
        corr_term = cov(c[t1], c[t2])
    eps = k_hat - raw_term - corr_term
    return {"k_hat": k_hat, "raw_term": raw_term, "correction_term": corr_term, "epsilon": eps, "flags": flags}


def check_psd(R, tol: float = PSD_FLOOR) -> None:
    """Raise :class:`NotPSDError` if ``R`` has an eigenvalue below ``-tol``."""
    _, lam = linalg.eigh(R)
    if lam[0] < -tol:
        raise NotPSDError(f"smallest eigenvalue {lam[0]:.3e}")
