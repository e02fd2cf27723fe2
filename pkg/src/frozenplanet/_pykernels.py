"""Pure numpy versions of the hot loops.

Both functions work on period-2 trigonometric series written as
f(x) = Re sum_k a[k] exp(i*pi*k*x), k = 0..K.
"""
import numpy as np

_CHUNK = 256


def series_eval(a, x):
    """Value, first and second derivative of the series at the points x."""
    a = np.asarray(a, dtype=np.complex128)
    x = np.asarray(x, dtype=np.float64)
    k = np.pi * np.arange(a.size)
    da = 1j * k * a
    dda = -(k * k) * a
    f = np.empty(x.size)
    df = np.empty(x.size)
    ddf = np.empty(x.size)
    for s in range(0, x.size, _CHUNK):
        e = np.exp(1j * np.outer(x[s:s + _CHUNK], k))
        f[s:s + _CHUNK] = (e @ a).real
        df[s:s + _CHUNK] = (e @ da).real
        ddf[s:s + _CHUNK] = (e @ dda).real
    return f, df, ddf


def invert_shift(a, t, lo, hi, x0, tol=4e-16, max_iter=80):
    """Solve x + p(x) = t pointwise, p the series a, x bracketed by [lo, hi].

    Newton steps that leave the bracket are replaced by bisection.
    """
    t = np.asarray(t, dtype=np.float64)
    lo = np.array(lo, dtype=np.float64)
    hi = np.array(hi, dtype=np.float64)
    x = np.array(x0, dtype=np.float64)
    todo = np.arange(t.size)
    for _ in range(max_iter):
        if todo.size == 0:
            break
        p, dp, _ = series_eval(a, x[todo])
        g = x[todo] + p - t[todo]
        d = 1.0 + dp
        l, h = lo[todo], hi[todo]
        l = np.where(g < 0, x[todo], l)
        h = np.where(g > 0, x[todo], h)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x[todo] - g / d
        bad = ~np.isfinite(xn) | (xn <= l) | (xn >= h)
        xn = np.where(bad, 0.5 * (l + h), xn)
        step = np.abs(xn - x[todo])
        lo[todo], hi[todo] = l, h
        x[todo] = xn
        done = (g == 0) | (step <= tol * (1.0 + np.abs(xn))) | (h - l <= tol * (1.0 + np.abs(xn)))
        todo = todo[~done]
    return x


def exp_sums(x, w, K):
    """S[k] = sum_j w[j] exp(i*pi*k*x[j]) for k = 0..K; w may be complex."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.complex128)
    k = np.pi * np.arange(K + 1)
    out = np.zeros(K + 1, dtype=np.complex128)
    for s in range(0, x.size, _CHUNK):
        out += w[s:s + _CHUNK] @ np.exp(1j * np.outer(x[s:s + _CHUNK], k))
    return out
