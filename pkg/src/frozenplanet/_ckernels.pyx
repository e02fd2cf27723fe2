# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in _pykernels."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, fabs, M_PI, isfinite

cnp.import_array()


cdef inline void _eval1(const double[::1] ar, const double[::1] ai, Py_ssize_t K,
                        double x, double* f, double* df, double* ddf) nogil:
    # exp(i*pi*k*x) by rotation; reseeded every 32 terms to keep drift small
    cdef double c1 = cos(M_PI * x), s1 = sin(M_PI * x)
    cdef double c = 1.0, s = 0.0, tmp, kk, re
    cdef double sf = 0.0, sdf = 0.0, sddf = 0.0
    cdef Py_ssize_t k
    for k in range(K):
        if k > 0:
            if k % 32 == 0:
                c = cos(M_PI * k * x)
                s = sin(M_PI * k * x)
            else:
                tmp = c * c1 - s * s1
                s = s * c1 + c * s1
                c = tmp
        kk = M_PI * k
        re = ar[k] * c - ai[k] * s
        sf += re
        sdf -= kk * (ar[k] * s + ai[k] * c)
        sddf -= kk * kk * re
    f[0] = sf
    df[0] = sdf
    ddf[0] = sddf


def series_eval(a, x):
    """Value, first and second derivative of the series at the points x."""
    a = np.ascontiguousarray(a, dtype=np.complex128)
    cdef const double[::1] ar = np.ascontiguousarray(a.real)
    cdef const double[::1] ai = np.ascontiguousarray(a.imag)
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t m = xv.shape[0], K = ar.shape[0], j
    f = np.empty(m)
    df = np.empty(m)
    ddf = np.empty(m)
    cdef double[::1] fv = f, dfv = df, ddfv = ddf
    with nogil:
        for j in range(m):
            _eval1(ar, ai, K, xv[j], &fv[j], &dfv[j], &ddfv[j])
    return f, df, ddf


def invert_shift(a, t, lo, hi, x0, double tol=4e-16, int max_iter=80):
    """Solve x + p(x) = t pointwise, p the series a, x bracketed by [lo, hi]."""
    a = np.ascontiguousarray(a, dtype=np.complex128)
    cdef const double[::1] ar = np.ascontiguousarray(a.real)
    cdef const double[::1] ai = np.ascontiguousarray(a.imag)
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef double[::1] lov = np.array(lo, dtype=np.float64)
    cdef double[::1] hiv = np.array(hi, dtype=np.float64)
    out = np.array(x0, dtype=np.float64)
    cdef double[::1] xv = out
    cdef Py_ssize_t m = tv.shape[0], K = ar.shape[0], j
    cdef int it
    cdef double x, l, h, p, dp, ddp, g, xn
    with nogil:
        for j in range(m):
            x = xv[j]
            l = lov[j]
            h = hiv[j]
            for it in range(max_iter):
                _eval1(ar, ai, K, x, &p, &dp, &ddp)
                g = x + p - tv[j]
                if g == 0:
                    break
                if g < 0:
                    l = x
                else:
                    h = x
                xn = x - g / (1.0 + dp)
                if not isfinite(xn) or xn <= l or xn >= h:
                    xn = 0.5 * (l + h)
                if fabs(xn - x) <= tol * (1.0 + fabs(xn)) or h - l <= tol * (1.0 + fabs(xn)):
                    x = xn
                    break
                x = xn
            xv[j] = x
    return out


def exp_sums(x, w, Py_ssize_t K):
    """S[k] = sum_j w[j] exp(i*pi*k*x[j]) for k = 0..K; w may be complex."""
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    wc = np.ascontiguousarray(w, dtype=np.complex128)
    cdef const double[::1] wr = np.ascontiguousarray(wc.real)
    cdef const double[::1] wi = np.ascontiguousarray(wc.imag)
    sr = np.zeros(K + 1)
    si = np.zeros(K + 1)
    cdef double[::1] srv = sr, siv = si
    cdef Py_ssize_t m = xv.shape[0], j, k
    cdef double c1, s1, c, s, tmp, a, b
    with nogil:
        for j in range(m):
            c1 = cos(M_PI * xv[j])
            s1 = sin(M_PI * xv[j])
            c = 1.0
            s = 0.0
            a = wr[j]
            b = wi[j]
            for k in range(K + 1):
                if k > 0:
                    if k % 32 == 0:
                        c = cos(M_PI * k * xv[j])
                        s = sin(M_PI * k * xv[j])
                    else:
                        tmp = c * c1 - s * s1
                        s = s * c1 + c * s1
                        c = tmp
                srv[k] += a * c - b * s
                siv[k] += a * s + b * c
    return sr + 1j * si
