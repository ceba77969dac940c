import datetime as dt
import logging

import numpy as np
import pytest
from scipy import integrate
from scipy.special import ndtr

from dualecc.calibration import (
    EmosCoefficients,
    TrainingWindow,
    crps_normal,
    emit_quantiles,
    fit_emos,
    fit_emos_all,
)
from dualecc.core import EnsembleForecast, ObservationSeries
from dualecc.errors import ValidationError

D0 = dt.date(2013, 1, 1)


def crps_by_integration(mu, sigma, y):
    f = lambda z: (ndtr((z - mu) / sigma) - (z >= y)) ** 2
    lo, hi = mu - 12 * sigma, mu + 12 * sigma
    left, _ = integrate.quad(f, lo, y, epsabs=1e-12, limit=200)
    right, _ = integrate.quad(f, y, hi, epsabs=1e-12, limit=200)
    return left + right


@pytest.mark.parametrize("mu, sigma, y, expected", [(0, 1, 0, 0.23370), (5, 1, 5, 0.23370), (0, 2, 0, 0.46740)])
def test_crps_normal_examples(mu, sigma, y, expected):
    # printed values carry five decimals; 0.46740 is twice the rounded 0.23370
    assert crps_normal(mu, sigma, y) == pytest.approx(expected, abs=1.5e-5)
    exact = sigma * (2 * np.exp(0.0) / np.sqrt(2 * np.pi) - 1 / np.sqrt(np.pi))
    assert crps_normal(mu, sigma, y) == pytest.approx(exact, rel=1e-14)


@pytest.mark.parametrize("mu, sigma, y", [(0, 1, 0.3), (2, 0.5, -1), (10, 3, 18), (1, 1e-2, 1.005)])
def test_crps_normal_matches_integration(mu, sigma, y):
    assert crps_normal(mu, sigma, y) == pytest.approx(crps_by_integration(mu, sigma, y), abs=1e-6)


def test_crps_normal_vectorised_and_guarded():
    out = crps_normal(np.zeros(3), np.ones(3), np.array([0.0, 1.0, -1.0]))
    assert out.shape == (3,) and out[1] == pytest.approx(out[2])
    with pytest.raises(ValidationError):
        crps_normal(0.0, 0.0, 1.0)


def _window(m, s2, y, target=None):
    n = len(m)
    dates = [D0 + dt.timedelta(i) for i in range(n)]
    target = target or D0 + dt.timedelta(n)
    col = lambda v: np.asarray(v, float)[:, None]
    return TrainingWindow(target, dates, col(m), col(s2), col(y), n)


def test_fit_recovers_identity_when_mean_is_exact(backend, rng):
    m = rng.uniform(2, 12, 45)
    k = fit_emos(_window(m, rng.uniform(0.5, 2, 45), m), 0)
    assert k.a == pytest.approx(0.0, abs=1e-3)
    assert k.b == pytest.approx(1.0, abs=1e-3)
    assert not k.fallback


def test_fit_recovers_constant_bias(backend, rng):
    m = rng.uniform(2, 12, 45)
    k = fit_emos(_window(m, rng.uniform(0.5, 2, 45), m + 2.0), 0)
    assert k.a == pytest.approx(2.0, abs=1e-3)
    assert k.b == pytest.approx(1.0, abs=1e-3)


def test_fit_variance_nonnegative(backend, rng):
    m = rng.uniform(2, 12, 45)
    k = fit_emos(_window(m, rng.uniform(0.5, 2, 45), m + rng.standard_normal(45)), 0)
    assert k.c >= 0 and k.d >= 0


def test_empty_window_falls_back(caplog):
    w = TrainingWindow.build([], {}, D0, 45, n_lead_times=3)
    with caplog.at_level(logging.WARNING, logger="dualecc.calibration"):
        k = fit_emos_all(w, 3)
    assert np.all(k.fallback) and np.all(k.b == 1) and np.all(k.a == 0)
    assert "identity coefficients" in caplog.text


def test_too_few_pairs_falls_back(rng):
    m = rng.uniform(2, 12, 14)
    assert fit_emos(_window(m, np.ones(14), m), 0).fallback


def test_missing_observations_are_skipped(rng):
    m = rng.uniform(2, 12, 30)
    y = m + 1.0
    y[::3] = np.nan
    w = _window(m, rng.uniform(0.5, 2, 30), y)
    assert w.usable(0).sum() == 20
    assert fit_emos(w, 0).a == pytest.approx(1.0, abs=1e-3)


def test_window_only_uses_prior_dates():
    T = 2
    fcs = [EnsembleForecast(D0 + dt.timedelta(i), "S", [1, 2], np.full((T, 2), 1.0 + i)) for i in range(60)]
    obs = ObservationSeries("S", [1, 2], {f.run_date: np.ones(T) for f in fcs})
    target = D0 + dt.timedelta(50)
    w = TrainingWindow.build(fcs, obs, target, 45)
    assert len(w.dates) == 45
    assert max(w.dates) < target and min(w.dates) == target - dt.timedelta(45)
    with pytest.raises(ValidationError):
        TrainingWindow(target, [target], np.ones((1, 2)), np.ones((1, 2)), np.ones((1, 2)))


def test_quantile_examples():
    f = np.full((1, 20), 10.0)  # zero ensemble variance
    q = emit_quantiles(EmosCoefficients(np.zeros(1), np.ones(1), np.zeros(1), np.ones(1)), f)
    assert np.all(q.values == 10.0)

    mean0 = np.zeros((1, 20))
    mean0[0, :2] = (-1.0, 1.0)  # ensemble mean 0, variance 2/19
    k = EmosCoefficients(np.zeros(1), np.ones(1), np.ones(1), np.zeros(1))
    q = emit_quantiles(k, mean0)
    assert q.values[0, 9] == 0.0  # Phi^-1(10/21) = -0.0597 floored
    assert q.values[0, 10] == pytest.approx(0.0597, abs=1e-4)

    k = EmosCoefficients(np.full(1, 8.0), np.zeros(1), np.full(1, 4.0), np.zeros(1))
    q = emit_quantiles(k, mean0)
    assert q.values[0, 19] == pytest.approx(11.34, abs=5e-3)
    assert np.all(np.diff(q.values[0]) > 0)


def test_coefficients_reject_negative_variance():
    with pytest.raises(ValidationError):
        EmosCoefficients(0.0, 1.0, -0.1, 1.0)
