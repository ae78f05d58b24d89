# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Sturm-sequence kernels for tridiagonal bisection.

The sequential pivot recurrence is the one hot loop in the package that
numpy cannot vectorize; everything else stays in Python/numpy.
"""

import numpy as np


cdef Py_ssize_t _count(double[::1] diag, double[::1] off2, double x,
                       double pivmin) nogil:
    cdef Py_ssize_t i, n = diag.shape[0]
    cdef Py_ssize_t count = 0
    cdef double q = diag[0] - x
    if q < 0.0:
        count += 1
    for i in range(1, n):
        if -pivmin < q < pivmin:
            q = -pivmin
        q = diag[i] - x - off2[i - 1] / q
        if q < 0.0:
            count += 1
    return count


def sturm_count(double[::1] diag, double[::1] off2, double x, double pivmin):
    """Number of eigenvalues of the tridiagonal matrix strictly below x."""
    return _count(diag, off2, x, pivmin)


def bisect_smallest(double[::1] diag, double[::1] off2, Py_ssize_t nev,
                    double lo, double hi, double abs_tol, double rel_tol,
                    int max_iter):
    """The nev smallest eigenvalues, by bisection on Sturm counts.

    [lo, hi] must enclose the whole spectrum (Gershgorin bounds).
    """
    cdef double pivmin = 0.0
    cdef Py_ssize_t i, j, n = diag.shape[0]
    for i in range(n - 1):
        if off2[i] > pivmin:
            pivmin = off2[i]
    pivmin = 1e-307 * (1.0 + pivmin)

    out = np.empty(nev, dtype=np.float64)
    los = np.full(nev, lo, dtype=np.float64)
    his = np.full(nev, hi, dtype=np.float64)
    cdef double[::1] lo_v = los
    cdef double[::1] hi_v = his
    cdef double[::1] out_v = out
    cdef double mid, width, tol
    cdef Py_ssize_t cnt
    cdef int it

    with nogil:
        for j in range(nev):
            for it in range(max_iter):
                width = hi_v[j] - lo_v[j]
                mid = lo_v[j] + 0.5 * width
                tol = abs_tol + rel_tol * (1.0 if mid < 0.0 else mid)
                if mid < 0.0:
                    tol = abs_tol - rel_tol * mid
                if width <= tol or mid == lo_v[j] or mid == hi_v[j]:
                    break
                cnt = _count(diag, off2, mid, pivmin)
                if cnt > j:
                    hi_v[j] = mid
                else:
                    lo_v[j] = mid
                # tighten the brackets of the remaining targets as well
                for i in range(j + 1, nev):
                    if cnt > i:
                        if mid < hi_v[i]:
                            hi_v[i] = mid
                    else:
                        if mid > lo_v[i]:
                            lo_v[i] = mid
            out_v[j] = lo_v[j] + 0.5 * (hi_v[j] - lo_v[j])
    return out
