# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels in ``_pyfallback``.

Same algorithms, explicit loops, GIL released for the solver and the
density sum so fold-level threads run concurrently.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, sqrt

cnp.import_array()


def kde_sum(query, train, double bandwidth):
    cdef const double[::1] q = np.ascontiguousarray(query, dtype=np.float64)
    cdef const double[::1] tr = np.ascontiguousarray(train, dtype=np.float64)
    out_arr = np.empty(q.shape[0])
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double inv = 1.0 / (2.0 * bandwidth * bandwidth)
    cdef double acc, d
    with nogil:
        for i in range(q.shape[0]):
            acc = 0.0
            for j in range(tr.shape[0]):
                d = q[i] - tr[j]
                acc += exp(-(d * d) * inv)
            out[i] = acc
    return out_arr


cdef inline void _matvec(const double[:, ::1] G, const double[::1] v, double[::1] out,
                         Py_ssize_t p) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(p):
        acc = 0.0
        for j in range(p):
            acc += G[i, j] * v[j]
        out[i] = acc


cdef inline double _dot(const double[::1] a, const double[::1] b, Py_ssize_t p) noexcept nogil:
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(p):
        acc += a[i] * b[i]
    return acc


cdef inline double _quad(const double[:, ::1] G, const double[::1] d, double[::1] tmp,
                         Py_ssize_t p) noexcept nogil:
    _matvec(G, d, tmp, p)
    return _dot(d, tmp, p)


cdef inline double _l1(const double[::1] x, const unsigned char[::1] mask, Py_ssize_t p) noexcept nogil:
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(p):
        if mask[i]:
            acc += fabs(x[i])
    return acc


cdef inline double _soft(double v, double thr) noexcept nogil:
    if v > thr:
        return v - thr
    if v < -thr:
        return v + thr
    return 0.0


cdef double _backtrack(const double[:, ::1] G, const double[::1] v, const double[::1] grad,
                       double L, double lam, const unsigned char[::1] mask,
                       double[::1] z, double[::1] d, double[::1] tmp, Py_ssize_t p) noexcept nogil:
    cdef Py_ssize_t i
    cdef double u
    while True:
        for i in range(p):
            u = v[i] - grad[i] / L
            z[i] = _soft(u, lam / L) if mask[i] else u
            d[i] = z[i] - v[i]
        if _quad(G, d, tmp, p) <= L * _dot(d, d, p) * (1.0 + 1e-12):
            return L
        L *= 2.0


def wlasso_gram(G_in, c_in, double bb, penalized, double lam, double L0, double lmax,
                double mu, Py_ssize_t max_iter, double tol, bint record=False):
    cdef const double[:, ::1] G = np.ascontiguousarray(G_in, dtype=np.float64)
    cdef const double[::1] c = np.ascontiguousarray(c_in, dtype=np.float64)
    cdef const unsigned char[::1] mask = np.ascontiguousarray(penalized, dtype=np.uint8)
    cdef Py_ssize_t p = c.shape[0]
    x_arr = np.zeros(p)
    cdef double[::1] x = x_arr
    cdef double[::1] y = np.zeros(p)
    cdef double[::1] z = np.zeros(p)
    cdef double[::1] xp = np.zeros(p)
    cdef double[::1] e = np.zeros(p)
    cdef double[::1] d = np.zeros(p)
    cdef double[::1] g = np.zeros(p)
    cdef double[::1] tmp = np.zeros(p)
    hist_arr = np.zeros((max_iter + 2 if record else 1, p))
    cdef double[:, ::1] hist = hist_arr
    cdef Py_ssize_t n_hist = 1
    cdef Py_ssize_t i, it = 0
    cdef double t = 1.0, t_new, beta, L = L0, dJ, dJp, J, bound
    cdef bint momentum = False, converged = False, done
    cdef bint certify = mu > 1e-12 * lmax

    with nogil:
        while it < max_iter:
            it += 1
            _matvec(G, y, g, p)
            for i in range(p):
                g[i] -= c[i]
            L = _backtrack(G, y, g, L, lam, mask, z, d, tmp, p)
            _matvec(G, x, g, p)
            for i in range(p):
                g[i] -= c[i]
                e[i] = z[i] - x[i]
            dJ = _dot(e, g, p) + 0.5 * _quad(G, e, tmp, p) + lam * (_l1(z, mask, p) - _l1(x, mask, p))
            if dJ > 0.0:
                if not momentum:
                    converged = True
                    break
                for i in range(p):
                    y[i] = x[i]
                t = 1.0
                momentum = False
                continue
            t_new = 0.5 * (1.0 + sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_new
            for i in range(p):
                y[i] = z[i] + beta * (z[i] - x[i])
                x[i] = z[i]
            t = t_new
            momentum = True
            if record:
                for i in range(p):
                    hist[n_hist, i] = x[i]
                n_hist += 1

            _matvec(G, x, g, p)
            for i in range(p):
                g[i] -= c[i]
            L = _backtrack(G, x, g, L, lam, mask, xp, e, tmp, p)
            dJp = _dot(e, g, p) + 0.5 * _quad(G, e, tmp, p) + lam * (_l1(xp, mask, p) - _l1(x, mask, p))
            if certify:
                bound = (L + lmax) * sqrt(_dot(e, e, p)) / mu
                done = bound <= tol
            else:
                J = 0.5 * _quad(G, x, tmp, p) - _dot(c, x, p) + 0.5 * bb + lam * _l1(x, mask, p)
                done = -dJp <= tol * (fabs(J) if fabs(J) > 1e-300 else 1e-300)
            if done:
                if dJp <= 0.0:
                    for i in range(p):
                        x[i] = xp[i]
                    if record:
                        for i in range(p):
                            hist[n_hist, i] = x[i]
                        n_hist += 1
                converged = True
                break

    history = [row.copy() for row in hist_arr[:n_hist]] if record else None
    return x_arr, it, bool(converged), history
