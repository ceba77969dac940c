# cython: language_level=3
"""Compiled hot loops: Jacobi eigensolver, EMOS Nelder-Mead, ensemble scores.

Every function here has a line-for-line counterpart in ``_pykernels``; the
two are kept algorithmically identical so either can back the public API.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport erfc, exp, sqrt, fabs, pow

cnp.import_array()

cdef double SQRT2 = 1.4142135623730951
cdef double INV_SQRT_PI = 0.5641895835477563
cdef double INV_SQRT_2PI = 0.3989422804014327
cdef double SIGMA_FLOOR = 1e-12


def jacobi_eigh(const double[:, ::1] A, double tol=1e-12, int max_sweeps=100):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns ``(w, V, sweeps, off)`` with eigenvalues ``w`` in ascending
    order, eigenvectors in the columns of ``V``, the number of sweeps used
    and the final off-diagonal Frobenius norm.
    """
    cdef Py_ssize_t n = A.shape[0]
    cdef Py_ssize_t i, j, k, p, q
    cdef double norm = 0.0, off, theta, t, c, s, apq, akp, akq, vkp, vkq
    cdef int sweep = 0

    a_arr = np.array(A, dtype=np.float64, copy=True)
    v_arr = np.eye(n, dtype=np.float64)
    cdef double[:, ::1] a = a_arr
    cdef double[:, ::1] v = v_arr

    for i in range(n):
        for j in range(n):
            norm += a[i, j] * a[i, j]
    norm = sqrt(norm)

    while True:
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += a[i, j] * a[i, j]
        off = sqrt(off)
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
                    t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    akp = a[p, k]
                    akq = a[q, k]
                    a[p, k] = c * akp - s * akq
                    a[q, k] = s * akp + c * akq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq

    w = np.diagonal(a_arr).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v_arr[:, order], sweep, off


cdef inline double _crps_normal(double mu, double sigma, double y) nogil:
    cdef double z
    if sigma < SIGMA_FLOOR:
        return fabs(y - mu)
    z = (y - mu) / sigma
    return sigma * (z * (1.0 - erfc(z / SQRT2)) + 2.0 * INV_SQRT_2PI * exp(-0.5 * z * z) - INV_SQRT_PI)


def crps_normal(double mu, double sigma, double y):
    return _crps_normal(mu, sigma, y)


cdef double _emos_objective(double* x, const double[::1] m, const double[::1] s2, const double[::1] y) nogil:
    cdef Py_ssize_t i, n = m.shape[0]
    cdef double total = 0.0, var
    for i in range(n):
        var = x[2] * x[2] + x[3] * x[3] * s2[i]
        total += _crps_normal(x[0] + x[1] * m[i], sqrt(var), y[i])
    return total / n


def emos_objective(double[::1] x, const double[::1] m, const double[::1] s2, const double[::1] y):
    return _emos_objective(&x[0], m, s2, y)


cdef void _sort_simplex(double[:, ::1] sim, double[::1] fsim) nogil:
    # stable insertion sort on the objective values
    cdef Py_ssize_t i, j, k, nv = fsim.shape[0], nd = sim.shape[1]
    cdef double fk, tmp[8]
    for i in range(1, nv):
        fk = fsim[i]
        for k in range(nd):
            tmp[k] = sim[i, k]
        j = i - 1
        while j >= 0 and fsim[j] > fk:
            fsim[j + 1] = fsim[j]
            for k in range(nd):
                sim[j + 1, k] = sim[j, k]
            j -= 1
        fsim[j + 1] = fk
        for k in range(nd):
            sim[j + 1, k] = tmp[k]


def emos_nelder_mead(const double[::1] m, const double[::1] s2, const double[::1] y, const double[::1] x0,
                     int max_iter=500, double fatol=1e-6, double step=0.5):
    """Minimise the mean normal CRPS over (a, b, gamma, delta).

    The predictive law is N(a + b*m, gamma**2 + delta**2 * s2). The initial
    simplex offsets each coordinate of ``x0`` by ``step``. Stops when the
    spread of objective values over the simplex is at most ``fatol``.
    Returns ``(x, fun, iterations)``.
    """
    cdef Py_ssize_t nd = 4, nv = 5, i, j, k
    cdef double rho = 1.0, chi = 2.0, psi = 0.5, sigma = 0.5
    cdef double xbar[4]
    cdef double xr[4]
    cdef double xe[4]
    cdef double xc[4]
    cdef double fxr, fxe, fxc, spread
    cdef int it = 1
    cdef bint shrink

    sim_arr = np.empty((nv, nd), dtype=np.float64)
    fsim_arr = np.empty(nv, dtype=np.float64)
    cdef double[:, ::1] sim = sim_arr
    cdef double[::1] fsim = fsim_arr

    for k in range(nd):
        sim[0, k] = x0[k]
    for i in range(nd):
        for k in range(nd):
            sim[i + 1, k] = x0[k]
        sim[i + 1, i] = x0[i] + step
    for i in range(nv):
        fsim[i] = _emos_objective(&sim[i, 0], m, s2, y)
    _sort_simplex(sim, fsim)

    while it < max_iter:
        spread = 0.0
        for i in range(1, nv):
            if fabs(fsim[i] - fsim[0]) > spread:
                spread = fabs(fsim[i] - fsim[0])
        if spread <= fatol:
            break

        for k in range(nd):
            xbar[k] = 0.0
            for i in range(nv - 1):
                xbar[k] += sim[i, k]
            xbar[k] /= nd
        for k in range(nd):
            xr[k] = (1.0 + rho) * xbar[k] - rho * sim[nv - 1, k]
        fxr = _emos_objective(xr, m, s2, y)
        shrink = False

        if fxr < fsim[0]:
            for k in range(nd):
                xe[k] = (1.0 + rho * chi) * xbar[k] - rho * chi * sim[nv - 1, k]
            fxe = _emos_objective(xe, m, s2, y)
            if fxe < fxr:
                for k in range(nd):
                    sim[nv - 1, k] = xe[k]
                fsim[nv - 1] = fxe
            else:
                for k in range(nd):
                    sim[nv - 1, k] = xr[k]
                fsim[nv - 1] = fxr
        elif fxr < fsim[nv - 2]:
            for k in range(nd):
                sim[nv - 1, k] = xr[k]
            fsim[nv - 1] = fxr
        elif fxr < fsim[nv - 1]:
            for k in range(nd):
                xc[k] = (1.0 + psi * rho) * xbar[k] - psi * rho * sim[nv - 1, k]
            fxc = _emos_objective(xc, m, s2, y)
            if fxc <= fxr:
                for k in range(nd):
                    sim[nv - 1, k] = xc[k]
                fsim[nv - 1] = fxc
            else:
                shrink = True
        else:
            for k in range(nd):
                xc[k] = (1.0 - psi) * xbar[k] + psi * sim[nv - 1, k]
            fxc = _emos_objective(xc, m, s2, y)
            if fxc < fsim[nv - 1]:
                for k in range(nd):
                    sim[nv - 1, k] = xc[k]
                fsim[nv - 1] = fxc
            else:
                shrink = True

        if shrink:
            for i in range(1, nv):
                for k in range(nd):
                    sim[i, k] = sim[0, k] + sigma * (sim[i, k] - sim[0, k])
                fsim[i] = _emos_objective(&sim[i, 0], m, s2, y)

        _sort_simplex(sim, fsim)
        it += 1

    return sim_arr[0].copy(), fsim[0], it


def energy_score(const double[:, ::1] X, const double[::1] y):
    """Energy score of scenarios ``X`` (T x N) against observation ``y`` (T)."""
    cdef Py_ssize_t T = X.shape[0], N = X.shape[1], t, i, j
    cdef double first = 0.0, second = 0.0, d, acc
    for i in range(N):
        acc = 0.0
        for t in range(T):
            d = y[t] - X[t, i]
            acc += d * d
        first += sqrt(acc)
    for i in range(N):
        for j in range(i + 1, N):
            acc = 0.0
            for t in range(T):
                d = X[t, i] - X[t, j]
                acc += d * d
            second += sqrt(acc)
    # each unordered pair appears twice in the double sum
    return first / N - second / (N * N)


cdef inline double _powabs(double d, double p, int mode) nogil:
    if mode == 1:
        return fabs(d)
    if mode == 2:
        return sqrt(fabs(d))
    return pow(fabs(d), p)


def variogram_score(const double[:, ::1] X, const double[::1] y, double p):
    """Variogram score of order ``p`` with inverse-square lag weights."""
    cdef Py_ssize_t T = X.shape[0], N = X.shape[1], i, j, n
    cdef double total = 0.0, vy, vx, w, diff
    cdef int mode = 1 if p == 1.0 else (2 if p == 0.5 else 0)
    for i in range(T):
        for j in range(i + 1, T):
            w = 1.0 / <double>((j - i) * (j - i))
            vy = _powabs(y[i] - y[j], p, mode)
            vx = 0.0
            for n in range(N):
                vx += _powabs(X[i, n] - X[j, n], p, mode)
            diff = vy - vx / N
            total += w * diff * diff
    # ordered pairs i != j: each unordered pair counted twice
    return 2.0 * total


def crps_ensemble(const double[::1] x, double y):
    """Ensemble CRPS in energy form."""
    cdef Py_ssize_t N = x.shape[0], i, j
    cdef double first = 0.0, second = 0.0
    for i in range(N):
        first += fabs(x[i] - y)
        for j in range(i + 1, N):
            second += fabs(x[i] - x[j])
    return first / N - second / (N * N)
