# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, NAN

cnp.import_array()

cdef enum:
    SQD = 0
    MAPE = 1


def maxmin_share(double capacity, list demands):
    cdef Py_ssize_t n = len(demands)
    cdef list alloc = [0.0] * n
    if n == 0:
        return alloc
    cdef list order = sorted(range(n), key=demands.__getitem__)
    cdef double remaining = capacity
    cdef double share, d
    cdef Py_ssize_t left = n, pos, i, j
    for pos in range(n):
        i = order[pos]
        share = remaining / left
        d = demands[i]
        if d <= share:
            alloc[i] = d
            remaining -= d
            left -= 1
        else:
            for j in range(pos, n):
                alloc[<Py_ssize_t>order[j]] = share
            break
    return alloc


cdef double _error_at(int fn, const double[::1] r_ex, const double[::1] r_ob,
                      Py_ssize_t start, Py_ssize_t k) nogil:
    cdef double total = 0.0, weights = 0.0, d, ex, w
    cdef Py_ssize_t i
    if fn == SQD:
        for i in range(k):
            d = r_ex[start + i] - r_ob[start + i]
            total += d * d
        return sqrt(total / k)
    if fn == MAPE:
        for i in range(k):
            ex = r_ex[start + i]
            total += fabs(ex - r_ob[start + i]) / ex
        return (100.0 / k) * total
    for i in range(k):
        d = r_ex[start + i] - r_ob[start + i]
        w = <double>(i + 1) / <double>k
        total += w * d * d
        weights += w
    return sqrt(total / weights)


def error_at(int fn, r_ex, r_ob, Py_ssize_t start, Py_ssize_t k):
    cdef const double[::1] ex = np.ascontiguousarray(r_ex, dtype=np.float64)
    cdef const double[::1] ob = np.ascontiguousarray(r_ob, dtype=np.float64)
    return _error_at(fn, ex, ob, start, k)


def batch_errors(int fn, r_ex, r_ob, ks):
    cdef const double[::1] ex = np.ascontiguousarray(r_ex, dtype=np.float64)
    cdef const double[:, ::1] obs = np.ascontiguousarray(r_ob, dtype=np.float64)
    cdef const Py_ssize_t[::1] kk = np.ascontiguousarray(ks, dtype=np.intp)
    cdef Py_ssize_t rows = obs.shape[0], nk = kk.shape[0], n = ex.shape[0]
    past_arr = np.empty((rows, nk))
    future_arr = np.empty((rows, nk))
    cdef double[:, ::1] past = past_arr
    cdef double[:, ::1] future = future_arr
    cdef Py_ssize_t row, c, k
    with nogil:
        for row in range(rows):
            for c in range(nk):
                k = kk[c]
                past[row, c] = _error_at(fn, ex, obs[row], 0, k)
                if k < n:
                    future[row, c] = _error_at(fn, ex, obs[row], k, n - k)
                else:
                    future[row, c] = NAN
    return past_arr, future_arr


cdef inline Py_ssize_t _floor_index(const double[::1] ts, double q) nogil:
    # bisect_right(ts, q) - 1, clamped at 0
    cdef Py_ssize_t lo = 0, hi = ts.shape[0], mid
    while lo < hi:
        mid = (lo + hi) // 2
        if q < ts[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo - 1 if lo > 0 else 0


def floor_index(ts, double q):
    cdef const double[::1] t = np.ascontiguousarray(ts, dtype=np.float64)
    return _floor_index(t, q)


def phi_batch(xs, members, eprime, ts, past, double t_init, double half_window):
    cdef const double[::1] x = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[::1] m = np.ascontiguousarray(members, dtype=np.float64)
    cdef const double[::1] e = np.ascontiguousarray(eprime, dtype=np.float64)
    cdef const double[::1] t = np.ascontiguousarray(ts, dtype=np.float64)
    cdef const double[::1] p = np.ascontiguousarray(past, dtype=np.float64)
    cdef Py_ssize_t nx = x.shape[0], nm = m.shape[0], a, b
    cdef double total, q
    out = [0.0] * nx
    for a in range(nx):
        total = 0.0
        for b in range(nm):
            q = x[a] + m[b] - t_init + half_window
            total += fabs(e[b] - p[_floor_index(t, q)])
        out[a] = total
    return out
