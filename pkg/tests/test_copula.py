import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualecc.copula import (
    check_psd,
    climatological_template,
    covariance_decomposition,
    decc,
    ecc,
    estimate_error_correlation,
    lagged_correlation,
)
from dualecc.errors import NotPSDError, ValidationError
from dualecc.synthetic import ar1


def _random_case(rng, T, N):
    raw = rng.gamma(3.0, 2.0, (T, N))
    q = np.sort(rng.gamma(3.0, 2.5, (T, N)), axis=1)
    return raw, q


def _ar1_corr(T, phi):
    i = np.arange(T)
    return phi ** np.abs(i[:, None] - i[None, :])


def test_ecc_hand_case():
    out = ecc(np.array([[10.0, 20.0, 30.0]]), np.array([[5.0, 2.0, 3.0]]))
    assert out.values.tolist() == [[30.0, 10.0, 20.0]]
    assert out.provenance == "ecc"


def test_ecc_first_occurrence_hand_case():
    raw = np.array([[5.0, 1.0, 3.0], [2.0, 4.0, 3.0]])
    q = np.array([[10.0, 20.0, 30.0], [10.0, 20.0, 30.0]])
    out = ecc(q, raw, "first-occurrence").values
    assert out[:, 0].tolist() == [30.0, 10.0]
    assert out[:, 1].tolist() == [10.0, 30.0]
    assert out[:, 2].tolist() == [20.0, 20.0]


def test_ecc_identity_copula(rng):
    raw = rng.gamma(2.0, 2.0, (5, 8))
    np.testing.assert_array_equal(ecc(np.sort(raw, axis=1), raw).values, raw)


def test_shape_mismatch():
    with pytest.raises(ValidationError):
        ecc(np.ones((2, 3)), np.ones((2, 4)))


class TestDeccReductions:
    def test_identity_matrix_gives_ecc(self, rng, backend):
        raw, q = _random_case(rng, 6, 10)
        a = ecc(q, raw, rng=np.random.default_rng(1)).values
        b = decc(q, raw, np.eye(6), rng=np.random.default_rng(1)).values
        np.testing.assert_array_equal(a, b)

    def test_zero_corrections_give_raw(self, rng, backend):
        raw, _ = _random_case(rng, 6, 10)
        out = decc(np.sort(raw, axis=1), raw, _ar1_corr(6, 0.7)).values
        np.testing.assert_array_equal(out, raw)

    def test_constant_corrections_give_ecc(self, rng, backend):
        raw, _ = _random_case(rng, 6, 10)
        q = np.sort(raw, axis=1) + 1.5
        out, info = decc(q, raw, _ar1_corr(6, 0.7), details=True)
        np.testing.assert_allclose(info["corrections"], 1.5, atol=1e-12)
        np.testing.assert_array_equal(out.values, ecc(q, raw).values)

    def test_intermediates(self, rng, backend):
        raw, q = _random_case(rng, 4, 6)
        Re = _ar1_corr(4, 0.5)
        out, info = decc(q, raw, Re, details=True)
        np.testing.assert_allclose(info["corrections"], info["ecc"] - raw)
        # recover the applied matrix from the corrections (full row rank, N > T)
        root = info["adjusted_corrections"] @ np.linalg.pinv(info["corrections"])
        np.testing.assert_allclose(root @ root, Re, atol=1e-8)
        np.testing.assert_allclose(info["adjusted_ensemble"], raw + info["adjusted_corrections"])

    def test_rejects_bad_matrix(self, rng):
        raw, q = _random_case(rng, 3, 4)
        with pytest.raises(ValidationError):
            decc(q, raw, np.eye(2))
        with pytest.raises(ValidationError):
            decc(q, raw, 2 * np.eye(3))
        with pytest.raises(NotPSDError):
            decc(q, raw, np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]]))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(2, 12), st.integers(0, 2**31 - 1), st.booleans())
def test_marginals_preserved(T, N, seed, with_ties):
    rng = np.random.default_rng(seed)
    raw, q = _random_case(rng, T, N)
    if with_ties:
        raw = np.round(raw)
        q[:, : N // 2] = 0.0
    Re = _ar1_corr(T, 0.8)
    hist = [rng.gamma(2.0, 2.0, T) for _ in range(N + 3)]
    for s in (ecc(q, raw, rng=rng), decc(q, raw, Re, rng=rng), climatological_template(q, hist, rng)):
        np.testing.assert_array_equal(np.sort(s.values, axis=1), q)


def test_climatological_hand_case():
    out = climatological_template(np.array([[10.0, 20.0], [10.0, 20.0]]), [(1.0, 5.0), (4.0, 2.0)])
    assert out.values[:, 0].tolist() == [10.0, 20.0]
    assert out.values[:, 1].tolist() == [20.0, 10.0]


def test_climatological_exact_history_is_seed_free(rng):
    q = np.sort(rng.gamma(2.0, 2.0, (4, 5)), axis=1)
    hist = [rng.gamma(2.0, 2.0, 4) for _ in range(5)]
    a = climatological_template(q, hist, np.random.default_rng(1)).values
    b = climatological_template(q, hist, np.random.default_rng(2)).values
    np.testing.assert_array_equal(a, b)


def test_climatological_increasing_history(rng):
    q = np.sort(rng.gamma(2.0, 2.0, (6, 5)), axis=1)
    q = q + np.arange(6)[:, None] * 100.0  # every quantile grows with t
    hist = [np.cumsum(rng.uniform(0.1, 1.0, 6)) for _ in range(9)]
    out = climatological_template(q, hist, rng).values
    assert np.all(np.diff(out, axis=0) > 0)


def test_climatological_needs_enough_history(rng):
    with pytest.raises(ValidationError):
        climatological_template(np.ones((2, 3)), [np.ones(2)] * 2)


def test_error_correlation_iid(backend):
    E = np.random.default_rng(3).standard_normal((5000, 6))
    R = estimate_error_correlation(E)
    assert np.max(np.abs(R - np.eye(6))) < 0.05


def test_error_correlation_ar1(backend):
    E = ar1(np.random.default_rng(4), 0.7, 5000, 8)
    R = estimate_error_correlation(E)
    assert lagged_correlation(R)[0] == pytest.approx(0.7, abs=0.05)
    np.testing.assert_array_equal(np.diag(R), 1.0)
    check_psd(R)


def test_error_correlation_constant_series_warns():
    E = np.random.default_rng(5).standard_normal((40, 3))
    E[:, 1] = 2.0
    with pytest.warns(RuntimeWarning, match="undefined"):
        R = estimate_error_correlation(E)
    assert R[0, 1] == 0.0 and R[1, 2] == 0.0


def test_error_correlation_shrinks_sparse_pairs():
    rng = np.random.default_rng(6)
    z = rng.standard_normal(40)
    E = np.column_stack([z, z + 0.01 * rng.standard_normal(40)])
    E[10:, 1] = np.nan  # 10 overlapping days
    R = estimate_error_correlation(E, min_pairs=15)
    r_full = np.corrcoef(E[:10, 0], E[:10, 1])[0, 1]
    assert R[0, 1] == pytest.approx(r_full * 10 / 15, rel=1e-6)


def test_covariance_decomposition_zero_corrections(rng):
    x = rng.standard_normal((3, 50))
    d = covariance_decomposition(x, np.zeros_like(x), 0, 2)
    assert d["correction_term"] == 0.0 and d["epsilon"] == pytest.approx(0.0, abs=1e-15)
    assert d["raw_term"] == pytest.approx(d["k_hat"])


def test_covariance_decomposition_independent(rng):
    N = 10_000
    x = rng.standard_normal((2, N)) * 2.0
    c = rng.standard_normal((2, N)) * 0.5
    d = covariance_decomposition(x, c, 0, 1)
    se = np.sqrt(2.0) * 2.0 * 0.5 / np.sqrt(N)
    assert abs(d["epsilon"]) < 3 * se
    assert d["k_hat"] == pytest.approx(d["raw_term"] + d["correction_term"] + d["epsilon"])


def test_covariance_decomposition_constant_raw(rng):
    x = np.full((2, 20), 4.0)
    d = covariance_decomposition(x, rng.standard_normal((2, 20)), 0, 1)
    assert d["raw_term"] == 0.0 and "raw-zero-variance" in d["flags"]
