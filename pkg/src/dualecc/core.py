"""Domain types shared by every stage, plus rank utilities."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from dualecc.errors import ValidationError

TIE_POLICIES = ("random", "first-occurrence")
PROVENANCES = ("raw", "ecc", "decc", "climatological-template")


def _frozen(a, dtype=np.float64) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def quantile_levels(n_members: int) -> np.ndarray:
    """Probability levels ``n / (N + 1)`` for ``n = 1..N``."""
    n = np.arange(1, n_members + 1, dtype=np.float64)
    return n / (n_members + 1)


def _check_finite(values: np.ndarray, what: str) -> None:
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        loc = tuple(int(i) for i in bad[0])
        raise ValidationError(f"{what}: non-finite value at (row, column) {loc}")


def _check_nonneg(values: np.ndarray, what: str) -> None:
    bad = np.argwhere(values < 0)
    if bad.size:
        loc = tuple(int(i) for i in bad[0])
        raise ValidationError(f"{what}: negative wind speed {values[loc]!r} at (row, column) {loc}")


@dataclass(frozen=True)
class EnsembleForecast:
    """Raw ensemble for one station and run date.

    ``members[t, i]`` is member ``i`` at lead time ``lead_times[t]``; column
    ``i`` is the same physical member at every lead time.
    """

    run_date: dt.date
    station_id: str
    lead_times: np.ndarray
    members: np.ndarray

    def __post_init__(self):
        members = _frozen(self.members)
        lead_times = _frozen(self.lead_times, dtype=np.int64)
        if members.ndim != 2:
            raise ValidationError(f"members must be T x N, got shape {members.shape}")
        T, N = members.shape
        if T < 2 or N < 2:
            raise ValidationError(f"need T >= 2 and N_e >= 2, got T={T}, N_e={N}")
        if lead_times.shape != (T,):
            raise ValidationError(f"{T} rows but {lead_times.size} lead times")
        if np.any(np.diff(lead_times) <= 0):
            raise ValidationError("lead times must be strictly increasing")
        _check_finite(members, f"forecast {self.run_date} {self.station_id}")
        _check_nonneg(members, f"forecast {self.run_date} {self.station_id}")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "lead_times", lead_times)

    @property
    def n_lead_times(self) -> int:
        return self.members.shape[0]

    @property
    def n_members(self) -> int:
        return self.members.shape[1]


@dataclass(frozen=True)
class ObservationSeries:
    """Observed wind speed for one station, keyed by run date.

    Each value is a length-T vector on the forecast lead-time grid; missing
    observations are NaN.
    """

    station_id: str
    lead_times: np.ndarray
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        lead_times = _frozen(self.lead_times, dtype=np.int64)
        vals = {}
        for date, v in self.values.items():
            v = _frozen(v)
            if v.shape != lead_times.shape:
                raise ValidationError(
                    f"observations {date} {self.station_id}: expected {lead_times.size} values, got {v.size}"
                )
            present = v[~np.isnan(v)]
            if np.any(~np.isfinite(present)):
                raise ValidationError(f"observations {date} {self.station_id}: non-finite value")
            if np.any(present < 0):
                raise ValidationError(f"observations {date} {self.station_id}: negative wind speed")
            vals[date] = v
        object.__setattr__(self, "lead_times", lead_times)
        object.__setattr__(self, "values", dict(sorted(vals.items())))

    def get(self, date: dt.date) -> np.ndarray | None:
        return self.values.get(date)

    def complete(self, date: dt.date) -> bool:
        v = self.values.get(date)
        return v is not None and not np.any(np.isnan(v))

    @property
    def dates(self) -> list:
        return list(self.values)


@dataclass(frozen=True)
class QuantileSet:
    """Calibrated marginals: N equidistant quantiles per lead time, rows sorted."""

    values: np.ndarray
    levels: np.ndarray = None

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 2:
            raise ValidationError(f"quantiles must be T x N, got shape {values.shape}")
        N = values.shape[1]
        levels = quantile_levels(N) if self.levels is None else _frozen(self.levels)
        if not np.array_equal(levels, quantile_levels(N)):
            raise ValidationError("quantile levels must be n/(N+1)")
        _check_finite(values, "quantiles")
        _check_nonneg(values, "quantiles")
        if np.any(np.diff(values, axis=1) < 0):
            raise ValidationError("quantile rows must be sorted non-decreasing")
        levels.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "levels", levels)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class ScenarioSet:
    """Post-processed member trajectories (T x N) and where they came from."""

    values: np.ndarray
    provenance: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        values = _frozen(self.values)
        if values.ndim != 2:
            raise ValidationError(f"scenarios must be T x N, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape


def as_matrix(x) -> np.ndarray:
    """Return the T x N matrix behind a forecast, quantile or scenario object."""
    for attr in ("members", "values"):
        if hasattr(x, attr) and isinstance(getattr(x, attr), np.ndarray):
            return getattr(x, attr)
    return np.asarray(x, dtype=np.float64)


def compute_ranks(template, tie_policy: str = "random", rng=None) -> np.ndarray:
    """Row-wise ranks ``R[t, n] = #{i : z[t, i] <= z[t, n]}`` with ties broken.

    Parameters
    ----------
    template : array_like
        ``T x N`` matrix (a 1-D input is treated as a single row).
    tie_policy : {"random", "first-occurrence"}
        ``random`` orders tied entries by a random permutation drawn from
        ``rng``; ``first-occurrence`` gives the lower rank to the lower column.
    rng : numpy.random.Generator, optional
        Source for random tie-breaking; defaults to a generator seeded with 0.

    Returns
    -------
    ndarray of int64, same shape as ``template``, each row a permutation of 1..N.
    """
    z = np.asarray(as_matrix(template), dtype=np.float64)
    squeeze = z.ndim == 1
    if squeeze:
        z = z[None, :]
    if z.ndim != 2:
        raise ValidationError(f"template must be 2-D, got shape {z.shape}")
    _check_finite(z, "rank template")
    T, N = z.shape
    if tie_policy == "first-occurrence":
        order = np.argsort(z, axis=1, kind="stable")
    elif tie_policy == "random":
        if rng is None:
            rng = np.random.default_rng(0)
        jitter = rng.random((T, N))
        order = np.lexsort((jitter, z), axis=-1)
    else:
        raise ValidationError(f"unknown tie policy {tie_policy!r}")
    ranks = np.empty((T, N), dtype=np.int64)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(1, N + 1), (T, N)), axis=1)
    return ranks[0] if squeeze else ranks


def reorder_by_ranks(q, ranks) -> np.ndarray:
    """Scenario ``i`` at lead time ``t`` takes the ``ranks[t, i]``-th quantile."""
    q = np.asarray(as_matrix(q), dtype=np.float64)
    ranks = np.asarray(ranks)
    return np.take_along_axis(q, ranks - 1, axis=1)


def ensemble_mean(f) -> np.ndarray:
    """Mean across members at each lead time."""
    x = as_matrix(f)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValidationError("ensemble must be T x N with N >= 1")
    return x.mean(axis=1)
