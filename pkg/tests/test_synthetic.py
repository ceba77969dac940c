import numpy as np
import pytest

from dualecc.copula import estimate_error_correlation, lagged_correlation
from dualecc.core import ensemble_mean
from dualecc.errors import ValidationError
from dualecc.pipeline import case_rng
from dualecc.synthetic import GeneratorConfig, cluster_of, generate
from dualecc.verification import RankHistogram, univariate_rank


def _obs(observations):
    return {o.station_id: o for o in observations}


def test_shapes_and_order():
    fc, ob = generate(GeneratorConfig(days=4, stations=2, T=5, n_members=6))
    assert len(fc) == 8 and len(ob) == 2
    assert fc[0].members.shape == (5, 6)
    assert [f.station_id for f in fc[:4]] == ["S01"] * 4
    assert len(ob[0].values) == 4


def test_deterministic():
    cfg = GeneratorConfig(days=10, stations=2)
    a, oa = generate(cfg)
    b, ob = generate(cfg)
    for f, g in zip(a, b):
        assert f.run_date == g.run_date
        np.testing.assert_array_equal(f.members, g.members)
    for d in oa[1].values:
        np.testing.assert_array_equal(oa[1].values[d], ob[1].values[d])
    c, _ = generate(cfg.with_(seed=1))
    assert not np.array_equal(a[0].members, c[0].members)


def test_nonnegative_even_when_centred_near_zero():
    fc, ob = generate(GeneratorConfig(days=30, baseline=0.5, truth_sd=3.0))
    assert min(f.members.min() for f in fc) >= 0
    assert min(np.nanmin(v) for o in ob for v in o.values.values()) >= 0


def test_bias_recovered():
    fc, ob = generate(GeneratorConfig(days=600, stations=1, bias=2.0, baseline=12.0))
    obs = _obs(ob)
    diff = [ensemble_mean(f) - obs[f.station_id].values[f.run_date] for f in fc]
    assert np.mean(diff) == pytest.approx(2.0, abs=0.1)


def test_error_autocorrelation_recovered():
    fc, ob = generate(GeneratorConfig(days=2000, stations=1, phi_err=0.7, baseline=12.0))
    obs = _obs(ob)
    errors = np.array([obs[f.station_id].values[f.run_date] - ensemble_mean(f) for f in fc])
    lag1 = lagged_correlation(estimate_error_correlation(errors))[0]
    assert lag1 == pytest.approx(0.7, abs=0.05)


def test_clusters_present():
    fc, _ = generate(GeneratorConfig(days=200, stations=1, cluster_share=0.5))
    labels = cluster_of(20, 4)
    between = []
    for f in fc:
        dev = f.members - f.members.mean(axis=1, keepdims=True)
        between.append(np.var([dev[:, labels == k].mean() for k in range(4)]))
    assert np.mean(between) > 0.01


def test_calibrated_regime_has_flat_rank_histogram():
    # one lead time per case keeps the ranks independent
    fc, ob = generate(GeneratorConfig(days=667, spread_factor=1.0, bias=0.0, phi_err=0.01))
    obs = _obs(ob)
    ranks = []
    for i, f in enumerate(fc[:2000]):
        t = i % f.n_lead_times
        y = obs[f.station_id].values[f.run_date][t]
        ranks.append(univariate_rank(f.members[t], y, case_rng(0, f.run_date, f.station_id)))
    assert RankHistogram.from_ranks("univariate", ranks, 20).chi2_pvalue() > 0.01


def test_underdispersive_default_is_not_calibrated():
    fc, ob = generate(GeneratorConfig(days=100))
    obs = _obs(ob)
    ranks = [
        univariate_rank(f.members[i % 21], obs[f.station_id].values[f.run_date][i % 21], case_rng(0, f.run_date, "x"))
        for i, f in enumerate(fc)
    ]
    assert RankHistogram.from_ranks("univariate", ranks, 20).chi2_pvalue() < 1e-6


def test_missing_rate():
    _, ob = generate(GeneratorConfig(days=50, missing_rate=0.2))
    vals = np.concatenate([v for o in ob for v in o.values.values()])
    assert 0.1 < np.isnan(vals).mean() < 0.3


@pytest.mark.parametrize(
    "bad", [dict(phi_err=1.0), dict(phi_truth=0.0), dict(spread_factor=0.0), dict(clusters=0), dict(days=0)]
)
def test_invalid_config(bad):
    with pytest.raises(ValidationError):
        GeneratorConfig(**bad)


def test_from_mapping_parses_strings():
    cfg = GeneratorConfig.from_mapping({"days": "12", "bias": "1.5", "start-date": "2020-02-01"})
    assert cfg.days == 12 and cfg.bias == 1.5 and cfg.start_date.year == 2020
    with pytest.raises(ValidationError):
        GeneratorConfig.from_mapping({"nope": "1"})
