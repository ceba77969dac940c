"""Multivariate and product-oriented verification of scenario sets.

Scores take scenarios as ``T x N`` matrices (lead time by member) and the
observed trajectory as a length-T vector.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from dualecc._backend import kernels
from dualecc.core import as_matrix, quantile_levels
from dualecc.errors import ValidationError

log = logging.getLogger(__name__)

BOOTSTRAP_LEVELS = (5.0, 25.0, 50.0, 75.0, 95.0)
N_REPLICATES = 500
N_BINS = 10
LEVEL_CONVENTIONS = ("midpoint", "plotting")
RANK_KINDS = ("univariate", "average-rank", "band-depth")


def _case(scenarios, obs):
    X = np.ascontiguousarray(as_matrix(scenarios), dtype=np.float64)
    y = np.ascontiguousarray(obs, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValidationError(f"scenarios {X.shape} and observation {y.shape} are not T x N / T")
    if np.any(np.isnan(y)):
        raise ValidationError("observation trajectory has missing values")
    return X, y


def energy_score(scenarios, obs) -> float:
    """Energy score with the Euclidean norm over the lead-time vector."""
    X, y = _case(scenarios, obs)
    return float(kernels.energy_score(X, y))


def variogram_score(scenarios, obs, p: float = 1.0) -> float:
    """Variogram score of order ``p`` with weights ``1/(i-j)**2``.

    The sum runs over ordered pairs ``i != j``.
    """
    if not p > 0:
        raise ValidationError("variogram order p must be positive")
    X, y = _case(scenarios, obs)
    return float(kernels.variogram_score(X, y, float(p)))


def crps_ensemble(members, y: float) -> float:
    """Ensemble CRPS ``mean|x - y| - 1/(2N^2) sum|x_m - x_p|``."""
    x = np.ascontiguousarray(members, dtype=np.float64).ravel()
    if x.size < 1:
        raise ValidationError("need at least one member")
    return float(kernels.crps_ensemble(x, float(y)))


def _count_ranks(S: np.ndarray) -> np.ndarray:
    # R[t, k] = #{j : S[t, j] <= S[t, k]}
    return np.sum(S[:, None, :] <= S[:, :, None], axis=2)


def preranks(scenarios, obs, kind: str) -> np.ndarray:
    """Pre-ranks of the observation (index 0) and every member (1..N)."""
    X, y = _case(scenarios, obs)
    S = np.column_stack([y, X])
    K = S.shape[1]
    R = _count_ranks(S).astype(np.float64)
    if kind == "average-rank":
        return R.mean(axis=0)
    if kind == "band-depth":
        return np.mean((K - R) * (R - 1.0), axis=0)
    raise ValidationError(f"unknown multivariate rank kind {kind!r}")


def _rank_of_first(values: np.ndarray, rng) -> int:
    below = int(np.sum(values < values[0]))
    ties = int(np.sum(values == values[0]))
    return below + (1 if ties == 1 else int(rng.integers(1, ties + 1)))


def multivariate_rank(scenarios, obs, kind: str = "average-rank", rng=None) -> int:
    """Rank (1..N+1) of the observation's pre-rank among all pre-ranks.

    Ties are broken uniformly at random.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    return _rank_of_first(preranks(scenarios, obs, kind), rng)


def univariate_rank(members, y: float, rng=None) -> int:
    """Rank (1..N+1) of ``y`` among ``members``, ties broken at random."""
    if rng is None:
        rng = np.random.default_rng(0)
    vals = np.concatenate([[float(y)], np.asarray(members, dtype=np.float64).ravel()])
    return _rank_of_first(vals, rng)


@dataclass(frozen=True)
class RankHistogram:
    kind: str
    counts: np.ndarray

    @classmethod
    def from_ranks(cls, kind: str, ranks, n_members: int) -> "RankHistogram":
        if kind not in RANK_KINDS:
            raise ValidationError(f"unknown rank histogram kind {kind!r}")
        ranks = np.asarray(ranks, dtype=np.int64)
        if ranks.size and (ranks.min() < 1 or ranks.max() > n_members + 1):
            raise ValidationError("ranks outside 1..N+1")
        counts = np.bincount(ranks - 1, minlength=n_members + 1)
        return cls(kind, counts)

    @property
    def n_cases(self) -> int:
        return int(self.counts.sum())

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / max(self.n_cases, 1)

    @property
    def flatness(self) -> float:
        """Sum of absolute deviations of bin frequencies from ``1/K``."""
        K = self.counts.size
        return float(np.sum(np.abs(self.frequencies - 1.0 / K)))

    def chi2_pvalue(self) -> float:
        from scipy.stats import chisquare

        return float(chisquare(self.counts).pvalue)


def _pinball(y, q, tau):
    u = y - q
    return u * (tau - (u < 0))


def _equal_bins(f: np.ndarray, n_bins: int) -> list:
    """Index sets of ``n_bins`` equally populated bins of ``f``.

    Tied values always share a bin, so bins may be uneven (or fewer) when
    the forecast takes few distinct values.
    """
    order = np.argsort(f, kind="stable")
    fs = f[order]
    provisional = (np.arange(f.size) * n_bins) // f.size
    first = np.searchsorted(fs, fs, side="left")
    label = provisional[first]
    return [order[label == b] for b in np.unique(label)]


def decomposition_levels(n_members: int, convention: str = "midpoint") -> np.ndarray:
    """Probability levels assigned to the sorted members.

    ``"midpoint"`` gives ``(n - 1/2)/N``, for which ``2/N`` times the summed
    pinball losses equals the energy-form CRPS exactly. ``"plotting"`` gives
    ``n/(N+1)``; the sum then exceeds the CRPS by the ensemble spread term
    divided by ``N+1``.
    """
    if convention == "midpoint":
        return (np.arange(1, n_members + 1) - 0.5) / n_members
    if convention == "plotting":
        return quantile_levels(n_members)
    raise ValidationError(f"unknown level convention {convention!r}; use one of {LEVEL_CONVENTIONS}")


def crps_decomposition(members, obs, n_bins: int = N_BINS, levels: str = "midpoint") -> dict:
    """Reliability / resolution / uncertainty split of the ensemble CRPS.

    Each sorted member ``n`` is read as a quantile forecast at level
    ``tau_n`` (see :func:`decomposition_levels`); its quantile score is
    decomposed by grouping the cases into ``n_bins`` equally populated bins
    of forecast value, and the components are aggregated with weight ``2/N``.

    Parameters
    ----------
    members : array_like (cases x N)
    obs : array_like (cases,)
    n_bins : int
    levels : {"midpoint", "plotting"}

    Returns
    -------
    dict with ``reliability``, ``resolution``, ``uncertainty``, the implied
    ``quantile_score`` (= reliability - resolution + uncertainty) and the
    directly computed mean ``crps``.
    """
    F = np.sort(np.asarray(members, dtype=np.float64), axis=1)
    y = np.asarray(obs, dtype=np.float64).ravel()
    if F.ndim != 2 or F.shape[0] != y.size:
        raise ValidationError(f"members {F.shape} and observations {y.shape} mismatch")
    n_cases, N = F.shape
    if n_cases < 2:
        raise ValidationError("CRPS decomposition needs at least two cases")
    if n_cases < 100:
        log.warning("CRPS decomposition on only %d cases", n_cases)
    if n_cases < n_bins:
        msg = f"{n_cases} cases < {n_bins} bins; reducing to {n_cases} bins"
        log.warning(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        n_bins = n_cases

    taus = decomposition_levels(N, levels)
    rel = np.zeros(N)
    res = np.zeros(N)
    unc = np.zeros(N)
    for n, tau in enumerate(taus):
        f = F[:, n]
        q_clim = np.quantile(y, tau, method="inverted_cdf")
        rel_sum = res_sum = 0.0
        for idx in _equal_bins(f, n_bins):
            yk = y[idx]
            f_bar = f[idx].mean()
            y_cond = np.quantile(yk, tau, method="inverted_cdf")
            best = _pinball(yk, y_cond, tau).sum()
            rel_sum += _pinball(yk, f_bar, tau).sum() - best
            res_sum += _pinball(yk, q_clim, tau).sum() - best
        rel[n] = rel_sum / n_cases
        res[n] = res_sum / n_cases
        unc[n] = _pinball(y, q_clim, tau).mean()

    w = 2.0 / N
    reliability = float(w * rel.sum())
    resolution = float(w * res.sum())
    uncertainty = float(w * unc.sum())
    crps = float(np.mean([crps_ensemble(F[i], y[i]) for i in range(n_cases)]))
    return {
        "reliability": reliability,
        "resolution": resolution,
        "uncertainty": uncertainty,
        "quantile_score": reliability - resolution + uncertainty,
        "crps": crps,
        "n_cases": n_cases,
        "n_bins": n_bins,
        "levels": levels,
    }


@dataclass(frozen=True)
class BootstrapSummary:
    """Day-block bootstrap distribution of mean scores.

    ``replicates[r, j]`` is the mean of column ``j`` in replicate ``r``.
    """

    columns: tuple
    replicates: np.ndarray
    levels: tuple = BOOTSTRAP_LEVELS
    n_days: int = 0
    quantiles: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.quantiles:
            q = np.percentile(self.replicates, self.levels, axis=0)
            object.__setattr__(
                self, "quantiles", {c: q[:, j].copy() for j, c in enumerate(self.columns)}
            )

    def column(self, name) -> np.ndarray:
        return self.replicates[:, self.columns.index(name)]

    def fraction_below(self, a, b) -> float:
        """Share of replicates in which column ``a`` is strictly below ``b``."""
        return float(np.mean(self.column(a) < self.column(b)))

    def to_dict(self) -> dict:
        return {
            "n_days": self.n_days,
            "n_replicates": int(self.replicates.shape[0]),
            "levels": list(self.levels),
            "quantiles": {str(c): [float(v) for v in q] for c, q in self.quantiles.items()},
        }


def block_bootstrap(samples, replicates: int = N_REPLICATES, seed: int = 0,
                    levels=BOOTSTRAP_LEVELS, columns=None) -> BootstrapSummary:
    """Resample whole days with replacement and average each score column.

    Parameters
    ----------
    samples : array_like (days x k) or mapping name -> per-day values
        One row per verification day; several stations on the same day
        should be averaged into the day's row beforehand (see
        :func:`daily_table`). All columns share the resampled days, so
        replicate-wise comparisons between columns are paired.
    replicates : int
    seed : int
        Master seed; replicate ``r`` uses the ``r``-th spawned substream.
    """
    if isinstance(samples, dict):
        columns = tuple(samples)
        table = np.column_stack([np.asarray(samples[c], dtype=np.float64) for c in columns])
    else:
        table = np.asarray(samples, dtype=np.float64)
        if table.ndim == 1:
            table = table[:, None]
        columns = tuple(columns) if columns is not None else tuple(range(table.shape[1]))
    n_days = table.shape[0]
    if n_days < 2:
        raise ValidationError("block bootstrap needs at least two days")
    streams = np.random.SeedSequence(seed).spawn(replicates)
    out = np.empty((replicates, table.shape[1]))
    for r, ss in enumerate(streams):
        idx = np.random.default_rng(ss).integers(0, n_days, size=n_days)
        out[r] = table[idx].mean(axis=0)
    return BootstrapSummary(columns, out, tuple(levels), n_days)


def daily_table(dates, values) -> tuple:
    """Average ``values`` over entries sharing a date.

    Returns ``(unique_dates, per_day_values)`` with rows in date order.
    """
    dates = list(dates)
    values = np.asarray(values, dtype=np.float64)
    uniq = sorted(set(dates))
    pos = {d: i for i, d in enumerate(uniq)}
    idx = np.array([pos[d] for d in dates])
    shape = (len(uniq),) + values.shape[1:]
    total = np.zeros(shape)
    count = np.zeros(len(uniq))
    np.add.at(total, idx, values)
    np.add.at(count, idx, 1.0)
    return uniq, total / count.reshape((-1,) + (1,) * (values.ndim - 1))
