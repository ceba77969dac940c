"""Local EMOS / nonhomogeneous Gaussian regression per lead time.

The predictive law at lead time ``t`` is ``N(a + b*m_t, c + d*s2_t)`` where
``m_t`` and ``s2_t`` are the raw ensemble mean and variance. Coefficients are
fitted by minimising the mean CRPS over a rolling training window and the
calibrated marginal is summarised by ``N`` equidistant quantiles floored at 0.
"""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from dualecc._backend import kernels
from dualecc.core import EnsembleForecast, QuantileSet, as_matrix, quantile_levels
from dualecc.errors import ValidationError

log = logging.getLogger(__name__)

WINDOW_DAYS = 45
MIN_SAMPLES = 15
MAX_ITER = 500
FATOL = 1e-6
START = (0.0, 1.0, 0.1, 1.0)  # a, b, sqrt(c), sqrt(d)
SIMPLEX_STEP = 0.5
MAX_RESTARTS = 3

_INV_SQRT_PI = 1.0 / np.sqrt(np.pi)


def crps_normal(mu, sigma, y):
    """Closed-form CRPS of ``N(mu, sigma**2)`` for observation ``y``.

    Broadcasts over array inputs. ``sigma`` must be strictly positive.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(~(sigma > 0)):
        raise ValidationError("crps_normal needs sigma > 0")
    z = (y - mu) / sigma
    pdf = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    out = sigma * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * pdf - _INV_SQRT_PI)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class EmosCoefficients:
    """Mean map ``a + b*m`` and variance map ``c + d*s2``.

    Fields are scalars for a single lead time or length-T arrays.
    """

    a: np.ndarray | float
    b: np.ndarray | float
    c: np.ndarray | float
    d: np.ndarray | float
    fallback: np.ndarray | bool = False

    def __post_init__(self):
        if np.any(np.asarray(self.c) < 0) or np.any(np.asarray(self.d) < 0):
            raise ValidationError("EMOS variance coefficients must be non-negative")

    @classmethod
    def identity(cls, n_lead_times: int | None = None) -> "EmosCoefficients":
        if n_lead_times is None:
            return cls(0.0, 1.0, 0.0, 1.0, True)
        ones = np.ones(n_lead_times)
        return cls(0 * ones, ones.copy(), 0 * ones, ones.copy(), np.ones(n_lead_times, dtype=bool))

    @classmethod
    def stack(cls, per_lead: list) -> "EmosCoefficients":
        return cls(
            np.array([k.a for k in per_lead], dtype=np.float64),
            np.array([k.b for k in per_lead], dtype=np.float64),
            np.array([k.c for k in per_lead], dtype=np.float64),
            np.array([k.d for k in per_lead], dtype=np.float64),
            np.array([bool(k.fallback) for k in per_lead]),
        )

    def predictive(self, mean, var):
        mu = np.asarray(self.a) + np.asarray(self.b) * mean
        sigma = np.sqrt(np.asarray(self.c) + np.asarray(self.d) * var)
        return mu, sigma


@dataclass(frozen=True)
class TrainingWindow:
    """Forecast/observation pairs for one station preceding a target date.

    Attributes
    ----------
    dates : list of date
        Training dates, all strictly before ``target_date``.
    means, variances : ndarray (D x T)
        Raw ensemble mean and variance per training date and lead time.
    obs : ndarray (D x T)
        Observations, NaN where missing.
    """

    target_date: dt.date
    dates: list
    means: np.ndarray
    variances: np.ndarray
    obs: np.ndarray
    length_days: int = WINDOW_DAYS

    def __post_init__(self):
        if any(d >= self.target_date for d in self.dates):
            raise ValidationError("training window contains dates on or after the target date")

    @classmethod
    def build(cls, forecasts, observations, target_date, length_days: int = WINDOW_DAYS, n_lead_times=None):
        """Collect pairs with ``target_date - length_days <= date < target_date``.

        ``forecasts`` is an iterable of :class:`EnsembleForecast` for a single
        station; ``observations`` is the matching :class:`ObservationSeries`
        (or any mapping ``date -> vector``).
        """
        start = target_date - dt.timedelta(days=length_days)
        obs_map = getattr(observations, "values", observations)
        dates, means, variances, ys = [], [], [], []
        for f in sorted(forecasts, key=lambda f: f.run_date):
            if not (start <= f.run_date < target_date):
                continue
            y = obs_map.get(f.run_date)
            if y is None:
                continue
            dates.append(f.run_date)
            means.append(f.members.mean(axis=1))
            variances.append(f.members.var(axis=1, ddof=1))
            ys.append(np.asarray(y, dtype=np.float64))
        if not dates:
            T = n_lead_times or 0
            empty = np.zeros((0, T))
            return cls(target_date, [], empty, empty.copy(), empty.copy(), length_days)
        return cls(target_date, dates, np.array(means), np.array(variances), np.array(ys), length_days)

    @property
    def errors(self) -> np.ndarray:
        """Ensemble-mean errors ``y - m(x)`` (D x T), NaN where obs missing."""
        return self.obs - self.means

    def usable(self, t: int) -> np.ndarray:
        return np.isfinite(self.obs[:, t]) if self.obs.size else np.zeros(0, dtype=bool)


def fit_emos(window: TrainingWindow, lead_time: int, min_samples: int = MIN_SAMPLES,
             max_iter: int = MAX_ITER, fatol: float = FATOL) -> EmosCoefficients:
    """Fit EMOS coefficients for one lead time (0-based column index).

    Variance positivity is enforced by optimising ``sqrt(c)`` and ``sqrt(d)``.
    Falls back to identity coefficients with a logged warning when fewer
    than ``min_samples`` usable pairs exist.
    """
    ok = window.usable(lead_time)
    n = int(ok.sum())
    if n < min_samples:
        log.warning(
            "EMOS fit for %s lead index %d: %d usable pairs < %d, using identity coefficients",
            window.target_date, lead_time, n, min_samples,
        )
        return EmosCoefficients.identity()
    m = np.ascontiguousarray(window.means[ok, lead_time], dtype=np.float64)
    s2 = np.ascontiguousarray(window.variances[ok, lead_time], dtype=np.float64)
    y = np.ascontiguousarray(window.obs[ok, lead_time], dtype=np.float64)
    x = np.array(START)
    best = kernels.emos_objective(x, m, s2, y)
    # restart from the best vertex until a fresh simplex stops improving
    for _ in range(MAX_RESTARTS):
        x_new, f_new, _ = kernels.emos_nelder_mead(m, s2, y, x, max_iter, fatol, SIMPLEX_STEP)
        improved = best - f_new
        if f_new < best:
            x, best = x_new, f_new
        if improved <= fatol:
            break
    a, b, g, h = (float(v) for v in x)
    return EmosCoefficients(a, b, g * g, h * h, False)


def fit_emos_all(window: TrainingWindow, n_lead_times: int, **kwargs) -> EmosCoefficients:
    return EmosCoefficients.stack([fit_emos(window, t, **kwargs) for t in range(n_lead_times)])


def emit_quantiles(coeffs: EmosCoefficients, f) -> QuantileSet:
    """Equidistant calibrated quantiles ``max(0, mu + sigma * Phi^-1(n/(N+1)))``."""
    x = as_matrix(f)
    N = x.shape[1]
    mean = x.mean(axis=1)
    var = x.var(axis=1, ddof=1) if N > 1 else np.zeros(x.shape[0])
    mu, sigma = coeffs.predictive(mean, var)
    z = ndtri(quantile_levels(N))
    q = np.maximum(0.0, mu[:, None] + sigma[:, None] * z[None, :])
    return QuantileSet(q)


def calibrate(forecast: EnsembleForecast, window: TrainingWindow, **kwargs):
    """Fit every lead time on ``window`` and emit quantiles for ``forecast``."""
    coeffs = fit_emos_all(window, forecast.n_lead_times, **kwargs)
    return coeffs, emit_quantiles(coeffs, forecast)
