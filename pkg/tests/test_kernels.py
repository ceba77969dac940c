"""Compiled and fallback kernels must agree; both are checked against oracles."""

import numpy as np
import pytest

from dualecc import _pykernels
from dualecc._backend import BACKEND, available_backends

BACKENDS = available_backends()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")


def _sym(rng, n):
    A = rng.standard_normal((n, n))
    return np.ascontiguousarray(A + A.T)


def test_backend_selected():
    assert BACKEND in BACKENDS


@pytest.mark.parametrize("name", sorted(BACKENDS))
@pytest.mark.parametrize("n", [1, 2, 5, 12])
def test_jacobi_matches_numpy(name, n, rng):
    A = _sym(rng, n)
    w, V, sweeps, off = BACKENDS[name].jacobi_eigh(A)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(A), atol=1e-10)
    np.testing.assert_allclose(V @ np.diag(w) @ V.T, A, atol=1e-10)
    np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-12)
    assert np.all(np.diff(w) >= 0)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_jacobi_sweep_cap(name, rng):
    A = _sym(rng, 6)
    *_, sweeps, off = BACKENDS[name].jacobi_eigh(A, 1e-12, 1)
    assert sweeps == 1 and off > 0


@needs_both
def test_backends_agree_on_scores(rng):
    c, p = BACKENDS["cython"], BACKENDS["python"]
    for _ in range(20):
        T, N = rng.integers(1, 8), rng.integers(1, 12)
        X = np.ascontiguousarray(rng.gamma(2.0, 2.0, (T, N)))
        y = rng.gamma(2.0, 2.0, T)
        assert c.energy_score(X, y) == pytest.approx(p.energy_score(X, y), rel=1e-13, abs=1e-14)
        for q in (0.5, 1.0, 2.0):
            assert c.variogram_score(X, y, q) == pytest.approx(p.variogram_score(X, y, q), rel=1e-12, abs=1e-14)
        assert c.crps_ensemble(X[0].copy(), y[0]) == pytest.approx(p.crps_ensemble(X[0], y[0]), rel=1e-13, abs=1e-14)


@needs_both
def test_backends_agree_on_nelder_mead(rng):
    m = rng.uniform(2, 12, 45)
    s2 = rng.uniform(0.2, 2.0, 45)
    y = 0.5 + 0.8 * m + rng.standard_normal(45)
    x0 = np.array([0.0, 1.0, 0.1, 1.0])
    xc, fc, ic = BACKENDS["cython"].emos_nelder_mead(m, s2, y, x0, 500, 1e-6, 0.5)
    xp, fp, ip = BACKENDS["python"].emos_nelder_mead(m, s2, y, x0, 500, 1e-6, 0.5)
    assert ic == ip
    np.testing.assert_allclose(xc, xp, rtol=1e-9, atol=1e-9)
    assert fc == pytest.approx(fp, rel=1e-12)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_nelder_mead_reaches_reference_minimum(name, rng):
    from scipy.optimize import minimize

    m = rng.uniform(2, 12, 60)
    s2 = rng.uniform(0.2, 2.0, 60)
    y = 1.0 + 0.7 * m + 1.3 * rng.standard_normal(60)
    k = BACKENDS[name]
    x, f, _ = k.emos_nelder_mead(m, s2, y, np.array([0.0, 1.0, 0.1, 1.0]), 2000, 1e-10, 0.5)
    ref = minimize(lambda v: _pykernels.emos_objective(v, m, s2, y), x, method="Powell",
                   options={"xtol": 1e-10, "ftol": 1e-14})
    assert f <= ref.fun + 1e-6


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_crps_normal_sigma_floor(name):
    assert BACKENDS[name].crps_normal(2.0, 0.0, 5.0) == 3.0
