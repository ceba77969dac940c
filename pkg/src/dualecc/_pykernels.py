"""Pure-Python/NumPy versions of the compiled kernels in ``_ckernels.pyx``.

Used when the extension is not built, or when ``DUALECC_PURE_PYTHON`` is set.
The algorithms mirror the compiled ones step for step.
"""

from __future__ import annotations

import math

import numpy as np

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SIGMA_FLOOR = 1e-12


def jacobi_eigh(A, tol=1e-12, max_sweeps=100):
    a = np.array(A, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    norm = math.sqrt(float(np.sum(a * a)))
    sweep = 0
    while True:
        b = a.copy()
        np.fill_diagonal(b, 0.0)
        off = math.sqrt(float(np.sum(b * b)))
        if off <= tol * norm or sweep >= max_sweeps:
            break
        sweep += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diagonal(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order], sweep, off


def crps_normal(mu, sigma, y):
    if sigma < _SIGMA_FLOOR:
        return abs(y - mu)
    z = (y - mu) / sigma
    return sigma * (
        z * (1.0 - math.erfc(z / _SQRT2))
        + 2.0 * _INV_SQRT_2PI * math.exp(-0.5 * z * z)
        - _INV_SQRT_PI
    )


def _crps_normal_vec(mu, sigma, y):
    from scipy.special import erfc

    out = np.abs(y - mu)
    ok = sigma >= _SIGMA_FLOOR
    s = sigma[ok]
    z = (y[ok] - mu[ok]) / s
    out[ok] = s * (
        z * (1.0 - erfc(z / _SQRT2)) + 2.0 * _INV_SQRT_2PI * np.exp(-0.5 * z * z) - _INV_SQRT_PI
    )
    return out


def emos_objective(x, m, s2, y):
    sigma = np.sqrt(x[2] * x[2] + x[3] * x[3] * s2)
    return float(np.mean(_crps_normal_vec(x[0] + x[1] * m, sigma, y)))


def emos_nelder_mead(m, s2, y, x0, max_iter=500, fatol=1e-6, step=0.5):
    m = np.asarray(m, dtype=np.float64)
    s2 = np.asarray(s2, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    nd = 4
    rho, chi, psi, sigma = 1.0, 2.0, 0.5, 0.5

    def f(x):
        return emos_objective(x, m, s2, y)

    sim = np.empty((nd + 1, nd))
    sim[0] = x0
    for i in range(nd):
        sim[i + 1] = x0
        sim[i + 1, i] = x0[i] + step
    fsim = np.array([f(x) for x in sim])
    order = np.argsort(fsim, kind="stable")
    sim, fsim = sim[order], fsim[order]

    it = 1
    while it < max_iter:
        if np.max(np.abs(fsim[1:] - fsim[0])) <= fatol:
            break
        xbar = np.sum(sim[:-1], axis=0) / nd
        xr = (1.0 + rho) * xbar - rho * sim[-1]
        fxr = f(xr)
        shrink = False
        if fxr < fsim[0]:
            xe = (1.0 + rho * chi) * xbar - rho * chi * sim[-1]
            fxe = f(xe)
            if fxe < fxr:
                sim[-1], fsim[-1] = xe, fxe
            else:
                sim[-1], fsim[-1] = xr, fxr
        elif fxr < fsim[-2]:
            sim[-1], fsim[-1] = xr, fxr
        elif fxr < fsim[-1]:
            xc = (1.0 + psi * rho) * xbar - psi * rho * sim[-1]
            fxc = f(xc)
            if fxc <= fxr:
                sim[-1], fsim[-1] = xc, fxc
            else:
                shrink = True
        else:
            xcc = (1.0 - psi) * xbar + psi * sim[-1]
            fxcc = f(xcc)
            if fxcc < fsim[-1]:
                sim[-1], fsim[-1] = xcc, fxcc
            else:
                shrink = True
        if shrink:
            for i in range(1, nd + 1):
                sim[i] = sim[0] + sigma * (sim[i] - sim[0])
                fsim[i] = f(sim[i])
        order = np.argsort(fsim, kind="stable")
        sim, fsim = sim[order], fsim[order]
        it += 1
    return sim[0].copy(), float(fsim[0]), it


def _pair_upper(n):
    return np.triu_indices(n, k=1)


def energy_score(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    N = X.shape[1]
    first = float(np.sum(np.sqrt(np.sum((y[:, None] - X) ** 2, axis=0))))
    i, j = _pair_upper(N)
    second = float(np.sum(np.sqrt(np.sum((X[:, i] - X[:, j]) ** 2, axis=0))))
    return first / N - second / (N * N)


def variogram_score(X, y, p):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    T = X.shape[0]
    i, j = _pair_upper(T)
    w = 1.0 / (j - i).astype(np.float64) ** 2
    vy = np.abs(y[i] - y[j]) ** p
    vx = np.mean(np.abs(X[i, :] - X[j, :]) ** p, axis=1)
    return 2.0 * float(np.sum(w * (vy - vx) ** 2))


def crps_ensemble(x, y):
    x = np.asarray(x, dtype=np.float64)
    return energy_score(x[None, :], np.array([y], dtype=np.float64))
