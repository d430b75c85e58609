# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pair-sum kernels.

Every routine works on a dense block ``K[i, j]`` of pair weights together with
the nodal values seen from the row side (``urow``) and the column side
(``ucol``).  Rows are independent, so they are split across OpenMP threads;
reductions are done per row first and summed serially afterwards so the
result does not depend on the thread count.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport fabs, floor as c_floor, pow, sqrt

cnp.import_array()


# exponent classes: 0 general pow, 1 small nonnegative integer, 2 half-integer
cdef int _classify(double e, int* k):
    cdef double fe = c_floor(e)
    if e == fe and 0.0 <= e <= 6.0:
        k[0] = <int>fe
        return 1
    if 2.0 * e == c_floor(2.0 * e) and -1.0 <= fe <= 6.0:
        k[0] = <int>fe
        return 2
    k[0] = 0
    return 0


cdef inline double _pw(double t, double e, int kind, int k) noexcept nogil:
    """t^e for t > 0, avoiding pow for integer and half-integer e."""
    cdef double r = 1.0
    cdef int i
    if kind == 0:
        return pow(t, e)
    for i in range(k if k > 0 else 0):
        r = r * t
    if kind == 1:
        return r
    if k < 0:
        return sqrt(t) / t
    return r * sqrt(t)


cdef inline double _signed_pow(double t, double e, int kind, int k) noexcept nogil:
    if t > 0.0:
        return _pw(t, e, kind, k)
    elif t < 0.0:
        return -_pw(-t, e, kind, k)
    return 0.0


def row_flux(const double[:, ::1] K, const double[::1] urow,
             const double[::1] ucol, double p, int nthreads=1):
    """out[i] = sum_j K[i, j] |urow[i] - ucol[j]|^(p-2) (urow[i] - ucol[j])."""
    cdef Py_ssize_t n = K.shape[0], m = K.shape[1], i, j
    cdef double acc, t, e = p - 1.0
    cdef bint quadratic = (p == 2.0)
    cdef int k
    cdef int kind = _classify(e, &k)
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    if urow.shape[0] != n or ucol.shape[0] != m:
        raise ValueError("shape mismatch between kernel block and fields")
    for i in prange(n, nogil=True, schedule="static", num_threads=nthreads):
        acc = 0.0
        if quadratic:
            for j in range(m):
                acc = acc + K[i, j] * (urow[i] - ucol[j])
        else:
            for j in range(m):
                t = urow[i] - ucol[j]
                if t != 0.0:
                    acc = acc + K[i, j] * _signed_pow(t, e, kind, k)
        o[i] = acc
    return out


def pair_power_sum(const double[:, ::1] K, const double[::1] urow,
                   const double[::1] ucol, double p, int nthreads=1):
    """sum_{i,j} K[i, j] |urow[i] - ucol[j]|^p."""
    cdef Py_ssize_t n = K.shape[0], m = K.shape[1], i, j
    cdef double acc, t
    cdef bint quadratic = (p == 2.0)
    cdef int k
    cdef int kind = _classify(p, &k)
    rows = np.empty(n, dtype=np.float64)
    cdef double[::1] r = rows
    if urow.shape[0] != n or ucol.shape[0] != m:
        raise ValueError("shape mismatch between kernel block and fields")
    for i in prange(n, nogil=True, schedule="static", num_threads=nthreads):
        acc = 0.0
        if quadratic:
            for j in range(m):
                t = urow[i] - ucol[j]
                acc = acc + K[i, j] * t * t
        else:
            for j in range(m):
                t = fabs(urow[i] - ucol[j])
                if t != 0.0:
                    acc = acc + K[i, j] * _pw(t, p, kind, k)
        r[i] = acc
    cdef double total = 0.0
    for i in range(n):
        total += r[i]
    return total


def hessian_weights(const double[:, ::1] K, const double[::1] urow,
                    const double[::1] ucol, double p, double floor, int nthreads=1):
    """C[i, j] = (p - 1) K[i, j] max(|urow[i] - ucol[j]|, floor)^(p-2)."""
    cdef Py_ssize_t n = K.shape[0], m = K.shape[1], i, j
    cdef double t, e = p - 2.0, c = p - 1.0
    cdef bint quadratic = (p == 2.0)
    cdef int k
    cdef int kind = _classify(e, &k)
    if urow.shape[0] != n or ucol.shape[0] != m:
        raise ValueError("shape mismatch between kernel block and fields")
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in prange(n, nogil=True, schedule="static", num_threads=nthreads):
        if quadratic:
            for j in range(m):
                o[i, j] = K[i, j]
        else:
            for j in range(m):
                t = fabs(urow[i] - ucol[j])
                if t < floor:
                    t = floor
                o[i, j] = c * K[i, j] * _pw(t, e, kind, k)
    return out


def pair_weights(const double[:, ::1] xrow, const double[::1] mrow,
                 const double[:, ::1] xcol, const double[::1] mcol,
                 double exponent, int nthreads=1):
    """W[i, j] = mrow[i] mcol[j] |xrow[i] - xcol[j]|^(-exponent); coincident points get 0."""
    cdef Py_ssize_t n = xrow.shape[0], m = xcol.shape[0], d = xrow.shape[1], i, j, k
    cdef double r2, t, h = -0.5 * exponent
    if xcol.shape[1] != d:
        raise ValueError("coordinate dimension mismatch")
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in prange(n, nogil=True, schedule="static", num_threads=nthreads):
        for j in range(m):
            r2 = 0.0
            for k in range(d):
                t = xrow[i, k] - xcol[j, k]
                r2 = r2 + t * t
            if r2 == 0.0:
                o[i, j] = 0.0
            else:
                o[i, j] = mrow[i] * mcol[j] * pow(r2, h)
    return out
