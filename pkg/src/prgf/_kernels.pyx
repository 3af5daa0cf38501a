# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Semantics mirror ``prgf._pure`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

NAME = "cython"


def normalize_rows(W):
    cdef double[:, ::1] w = np.ascontiguousarray(W, dtype=np.float64)
    cdef Py_ssize_t n = w.shape[0], D = w.shape[1], i, j
    out = np.zeros((n, D), dtype=np.float64)
    norms = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] u = out
    cdef double[::1] nr = norms
    cdef double s, inv
    with nogil:
        for i in range(n):
            s = 0.0
            for j in range(D):
                s = s + w[i, j] * w[i, j]
            s = sqrt(s)
            nr[i] = s
            if s > 0.0:
                for j in range(D):
                    u[i, j] = w[i, j] / s
    return out, norms


def combine_biased(W, v, double lam):
    cdef double[:, ::1] w = np.ascontiguousarray(W, dtype=np.float64)
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = w.shape[0], D = w.shape[1], i, j
    out = np.empty((n, D), dtype=np.float64)
    norms = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] u = out
    cdef double[::1] nr = norms
    cdef double[::1] p = np.empty(D, dtype=np.float64)
    cdef double dot, s, sl = sqrt(lam), sc = sqrt(1.0 - lam)
    with nogil:
        for i in range(n):
            dot = 0.0
            for j in range(D):
                dot = dot + w[i, j] * vv[j]
            s = 0.0
            for j in range(D):
                p[j] = w[i, j] - dot * vv[j]
                s = s + p[j] * p[j]
            s = sqrt(s)
            nr[i] = s
            if s > 0.0:
                for j in range(D):
                    u[i, j] = sl * vv[j] + sc * (p[j] / s)
            else:
                for j in range(D):
                    u[i, j] = sl * vv[j]
    return out, norms


def fd_average(deltas, U):
    cdef double[::1] dl = np.ascontiguousarray(deltas, dtype=np.float64)
    cdef double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t q = u.shape[0], D = u.shape[1], i, j
    out = np.zeros(D, dtype=np.float64)
    cdef double[::1] g = out
    with nogil:
        for i in range(q):
            for j in range(D):
                g[j] = g[j] + dl[i] * u[i, j]
        for j in range(D):
            g[j] = g[j] / q
    return out


cdef inline double _F_full(double lam, double alpha2, double D, double q) nogil:
    cdef double a = (1.0 - lam) / (D - 1.0)
    cdef double num = lam * alpha2 + a * (1.0 - alpha2)
    cdef double den = (1.0 - 1.0 / q) * (lam * lam * alpha2 + a * a * (1.0 - alpha2)) + num / q
    if num > 0.0:
        if den > 0.0:
            return num * num / den
        return num * num
    return 0.0


cdef inline double _F_subspace(double lam, double alpha2, double A2, double d, double q) nogil:
    cdef double a = (1.0 - lam) / d
    cdef double num = lam * alpha2 + a * A2
    cdef double den = (1.0 - 1.0 / q) * (lam * lam * alpha2 + a * a * A2) + num / q
    if num > 0.0:
        if den > 0.0:
            return num * num / den
        return num * num
    return 0.0


cdef inline double _averaging_loss(double mu, double alpha, double ebeta, double cross) nogil:
    cdef double num = (1.0 - mu) * alpha + mu * ebeta
    cdef double den = (1.0 - mu) * (1.0 - mu) + mu * mu + 2.0 * mu * (1.0 - mu) * cross
    return 1.0 - num * num / den


def F_full(double lam, double alpha2, double D, double q):
    return _F_full(lam, alpha2, D, q)


def F_subspace(double lam, double alpha2, double A2, double d, double q):
    return _F_subspace(lam, alpha2, A2, d, q)


def averaging_loss(double mu, double alpha, double ebeta, double cross):
    return _averaging_loss(mu, alpha, ebeta, cross)


def grid_argmax_F(double alpha2, double D, double q, long n):
    cdef long k, best_k = 0
    cdef double lam, val, best = -1.0
    cdef double dn = <double>n
    with nogil:
        for k in range(n + 1):
            lam = (<double>k) / dn
            val = _F_full(lam, alpha2, D, q)
            if val > best:
                best = val
                best_k = k
    return (<double>best_k) / dn, best


def grid_argmax_F_subspace(double alpha2, double A2, double d, double q, long n):
    cdef long k, best_k = 0
    cdef double lam, val, best = -1.0
    cdef double dn = <double>n
    with nogil:
        for k in range(n + 1):
            lam = (<double>k) / dn
            val = _F_subspace(lam, alpha2, A2, d, q)
            if val > best:
                best = val
                best_k = k
    return (<double>best_k) / dn, best


def grid_argmin_averaging(double alpha, double ebeta, double cross, long n):
    cdef long k, best_k = 0
    cdef double mu, val, best = 2.0
    cdef double dn = <double>n
    with nogil:
        for k in range(n + 1):
            mu = (<double>k) / dn
            val = _averaging_loss(mu, alpha, ebeta, cross)
            if val < best:
                best = val
                best_k = k
    return (<double>best_k) / dn, best
