"""Time changes and the map between regularized loops z and positions q = z^2.

For a loop z the physical time is t_z(tau) = (1/||z||^2) int_0^tau z^2,
a monotone degree-one circle map. Everything here works on the period-2
grid: t_z(tau + 2) = t_z(tau) + 2, and t_z(tau + 1) = t_z(tau) + 1 when
z^2 has period 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar

from ._kernels import invert_shift, series_eval
from .grid import LoopGrid, SymmetryClass, ZLoop, ZPair, dnorm2, norm2, second_derivative

PERIOD = 2.0


class DegenerateLoop(ValueError):
    pass


class CollisionError(ValueError):
    pass


def _zero_mask(values: np.ndarray) -> np.ndarray:
    scale = np.max(np.abs(values))
    return np.abs(values) <= 1e-12 * scale


class TimeChange:
    """t_z on the tau-grid and its inverse tau_z on the t-grid.

    t_z(x) = x + p(x) with p periodic; p is kept as a trigonometric series
    so both maps can be evaluated anywhere to round-off.
    """

    def __init__(self, z: ZLoop):
        nz = norm2(z)
        if not nz > 0:
            raise DegenerateLoop("degenerate loop")
        zero = _zero_mask(z.values)
        if np.any(zero & np.roll(zero, 1)):
            raise DegenerateLoop("degenerate loop")
        self.z = z
        self.grid = z.grid
        self.norm2 = nz
        n = z.n
        w = np.fft.rfft(z.values**2 / nz)
        k = z.grid.wavenumbers
        c = np.zeros_like(w)
        c[1:] = w[1:] / (1j * k[1:])
        a = 2.0 * c / n
        a[0] = 0.0
        # antiderivative of the Nyquist cosine is a sine; keep it for off-grid use
        a[-1] = -1j * w[-1].real / (k[-1] * n)
        a[0] = -np.sum(a).real
        self.series = a

    def t_at(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return x + series_eval(self.series, x)[0]

    @cached_property
    def t_of_tau(self) -> np.ndarray:
        n = self.grid.n
        y = np.zeros(n, dtype=complex)
        y[: self.series.size] = self.series
        t = self.grid.tau + n * np.fft.ifft(y).real
        t[0] = 0.0
        return t

    def tau_at(self, t) -> np.ndarray:
        """Inverse map; arguments outside [0, 2) are reduced and shifted back."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        m = np.floor(t / PERIOD)
        r = t - PERIOD * m
        table = np.append(self.t_of_tau, PERIOD)
        nodes = np.append(self.grid.tau, PERIOD)
        j = np.clip(np.searchsorted(table, r, side="right") - 1, 0, self.grid.n - 1)
        lo, hi = nodes[j], nodes[j + 1]
        tl, th = table[j], table[j + 1]
        x0 = lo + (hi - lo) * np.where(th > tl, (r - tl) / np.where(th > tl, th - tl, 1.0), 0.5)
        exact = r == tl
        x = invert_shift(self.series, r, lo, hi, x0)
        x = np.where(exact, lo, x)
        return x + PERIOD * m

    @cached_property
    def tau_of_t(self) -> np.ndarray:
        return self.tau_at(self.grid.tau)


def time_change(z: ZLoop) -> TimeChange:
    tc = TimeChange(z)
    if np.any(np.diff(tc.t_of_tau) <= 0):
        raise DegenerateLoop("degenerate loop")
    return tc


def z_to_q(z: ZLoop) -> np.ndarray:
    """q_j = z(tau_z(t_j))^2 on the uniform t-grid."""
    return z(time_change(z).tau_of_t) ** 2


def cross_eval(za: ZLoop, zb: ZLoop) -> np.ndarray:
    """zb(tau_zb(t_za(tau_j))) on the tau-grid."""
    ta = time_change(za).t_of_tau
    return zb(time_change(zb).tau_at(ta))


def mean_q(z: ZLoop) -> float:
    return norm2(z.with_values(z.values**2)) / norm2(z)


def mean_inv_q(z: ZLoop) -> float:
    return 1.0 / norm2(z)


def qdot_norm2(z: ZLoop) -> float:
    return 4.0 * norm2(z) * dnorm2(z)


def _third_derivative_at(z: ZLoop, x: np.ndarray) -> np.ndarray:
    k = z.grid.wavenumbers
    a = z.series * (1j * k) ** 3
    return series_eval(a, x)[0]


def kepler_energy(z: ZLoop, N: float = 2.0) -> np.ndarray:
    """E_z(tau) = (2||z||^4 z'^2 - N)/z^2, continuously extended through zeros."""
    nz = norm2(z)
    x = np.asarray(z.grid.tau)
    v, dv, _ = z.eval_with_derivatives(x)
    zero = _zero_mask(z.values)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = (2.0 * nz**2 * dv**2 - N) / v**2
    if np.any(zero):
        d1 = dv[zero]
        if np.any(np.abs(d1) < 1e-8 * np.max(np.abs(dv))):
            raise CollisionError("non-transverse collision")
        e[zero] = 2.0 * nz**2 * _third_derivative_at(z, x[zero]) / d1
    return e


def loop_zeros(z: ZLoop) -> np.ndarray:
    """Zeros of the interpolant in [0, 2), refined by Newton from sign changes."""
    v = z.values
    n = z.n
    out = []
    zero = _zero_mask(v)
    for j in range(n):
        if zero[j]:
            out.append(z.grid.tau[j])
            continue
        k = (j + 1) % n
        if not zero[k] and v[j] * v[k] < 0:
            x = z.grid.tau[j] + z.grid.h * v[j] / (v[j] - v[k])
            for _ in range(50):
                f, df, _ = z.eval_with_derivatives(x)
                step = f[0] / df[0]
                x -= step
                if abs(step) < 1e-15:
                    break
            out.append(float(x) % PERIOD)
    return np.sort(np.asarray(out))


@dataclass
class QOrbit:
    """Physical trajectories sampled at uniform times.

    qdd holds second derivatives from the chain rule through the smooth
    regularized loops; they are infinite at collisions.
    """

    grid: LoopGrid
    t: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    qd1: np.ndarray
    qd2: np.ndarray
    qdd1: np.ndarray
    qdd2: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    zeros2: np.ndarray
    qbar1: float
    qbar2: float
    period: float
    r: float = 1.0
    N: float = 2.0
    scale: float = 1.0
    extras: dict = field(default_factory=dict)

    def rescaled(self, c: float) -> "QOrbit":
        """q_c(t) = c^2 q(t/c^3)."""
        return QOrbit(
            grid=self.grid,
            t=c**3 * self.t,
            q1=c**2 * self.q1,
            q2=c**2 * self.q2,
            qd1=self.qd1 / c,
            qd2=self.qd2 / c,
            qdd1=self.qdd1 / c**4,
            qdd2=self.qdd2 / c**4,
            E1=self.E1 / c**2,
            E2=self.E2 / c**2,
            zeros2=c**3 * self.zeros2,
            qbar1=c**2 * self.qbar1,
            qbar2=c**2 * self.qbar2,
            period=c**3 * self.period,
            r=self.r,
            N=self.N,
            scale=c * self.scale,
        )

    @property
    def h(self) -> float:
        return self.t[1] - self.t[0]


def _physical(z: ZLoop, t: np.ndarray, N: float):
    tc = time_change(z)
    nz = tc.norm2
    tau = tc.tau_at(t)
    v, dv, _ = z.eval_with_derivatives(tau)
    # z'' between nodes from local interpolation of its grid values: the
    # trigonometric interpolant would spread a cusp of z'' over the period
    ddv = _periodic_local(second_derivative(z).values, tau)
    q = v * v
    zero = np.abs(v) <= 1e-12 * np.max(np.abs(z.values))
    with np.errstate(divide="ignore", invalid="ignore"):
        qd = 2.0 * nz * dv / v
        qdd = 2.0 * nz**2 * (ddv * v - dv * dv) / v**4
        e = (2.0 * nz**2 * dv**2 - N) / v**2
    qdd[zero] = -np.inf
    qd[zero] = np.nan
    if np.any(zero):
        e[zero] = 2.0 * nz**2 * _third_derivative_at(z, tau[zero]) / dv[zero]
    return q, qd, qdd, e


def pair_period(z: ZPair) -> float:
    twisted = all(zi.cls.shift_sign != 0 for zi in z)
    return 1.0 if twisted else PERIOD


def orbit_from_pair(z: ZPair, r: float = 1.0, N: float = 2.0) -> QOrbit:
    grid = z.grid
    t = np.asarray(grid.tau, dtype=float).copy()
    q1, qd1, qdd1, e1 = _physical(z.z1, t, N)
    q2, qd2, qdd2, e2 = _physical(z.z2, t, N)
    tz = loop_zeros(z.z2)
    zeros = time_change(z.z2).t_at(tz) if tz.size else tz
    zeros = np.asarray(zeros) % PERIOD
    zeros = np.sort(np.where(np.abs(zeros - PERIOD) < 1e-12, 0.0, zeros))
    return QOrbit(
        grid=grid,
        t=t,
        q1=q1,
        q2=q2,
        qd1=qd1,
        qd2=qd2,
        qdd1=qdd1,
        qdd2=qdd2,
        E1=e1,
        E2=e2,
        zeros2=zeros,
        qbar1=mean_q(z.z1),
        qbar2=mean_q(z.z2),
        period=pair_period(z),
        r=r,
        N=N,
    )


# ---------------------------------------------------------------------------
# q -> z
#
# Near a collision q(t) ~ |t - t*|^(2/3), so q is not smooth in t. In the
# variable u = (t - t*)^(1/3) it is smooth again, which is what the local
# interpolants below exploit.

_STENCIL = 10
_WINDOW = 16
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(10)


def _bary_weights(x: np.ndarray) -> np.ndarray:
    d = x[:, :, None] - x[:, None, :]
    m = x.shape[1]
    d[:, np.arange(m), np.arange(m)] = 1.0
    return 1.0 / np.prod(d, axis=2)


def _local_interp(nodes: np.ndarray, values: np.ndarray, x: np.ndarray, m: int) -> np.ndarray:
    """Barycentric interpolation with m consecutive sorted nodes around each x."""
    j = np.searchsorted(nodes, x) - m // 2
    j = np.clip(j, 0, nodes.size - m)
    idx = j[:, None] + np.arange(m)
    xs = nodes[idx]
    w = _bary_weights(xs)
    d = x[:, None] - xs
    hit = d == 0
    d[hit] = 1.0
    c = w / d
    out = np.sum(c * values[idx], axis=1) / np.sum(c, axis=1)
    rows, cols = np.nonzero(hit)
    out[rows] = values[idx][rows, cols]
    return out


def _periodic_local(values: np.ndarray, x: np.ndarray, m: int = _STENCIL) -> np.ndarray:
    """Local barycentric interpolation of samples on the period-2 grid."""
    n = values.size
    h = PERIOD / n
    j = np.arange(-m, n + m)
    return _local_interp(j * h, values[j % n], np.asarray(x) % PERIOD, m)


def _wrap(d):
    return (d + 0.5 * PERIOD) % PERIOD - 0.5 * PERIOD


def _gauss(a, b, f):
    """Vectorized 10-point Gauss-Legendre rule on [a_i, b_i]."""
    x = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * _GAUSS_X
    return 0.5 * (b - a) * (f(x.ravel()).reshape(x.shape) @ _GAUSS_W)


class _QInterpolant:
    """Local interpolation of q: polynomial in t away from collisions,
    and near a collision t* polynomial in u = (t - t*)^(1/3) of the
    smooth positive function Y(u) = sqrt(q)/|u|, so that q = u^2 Y^2.
    """

    def __init__(self, q: np.ndarray, zeros: np.ndarray):
        n = q.size
        self.h = PERIOD / n
        self.zeros = zeros
        j = np.arange(-_STENCIL, n + _STENCIL)
        self.tnodes = j * self.h
        self.tvals = q[j % n]
        self.windows = []
        for ts in zeros:
            k0 = int(np.floor(ts / self.h))
            ks = np.arange(k0 - _WINDOW - _STENCIL, k0 + _WINDOW + _STENCIL + 2)
            u = np.cbrt(ks * self.h - ts)
            keep = np.abs(u) > 1e-6 * np.cbrt(self.h)
            self.windows.append((ts, u[keep], np.sqrt(q[ks[keep] % n]) / np.abs(u[keep])))

    def locate(self, t: np.ndarray):
        """Index of the nearest collision, signed distance to it, and whether t is in its window."""
        if not self.zeros.size:
            return np.zeros(t.shape, int), np.full(t.shape, np.inf), np.zeros(t.shape, bool)
        d = _wrap(t[:, None] - self.zeros[None, :])
        k = np.argmin(np.abs(d), axis=1)
        d = d[np.arange(t.size), k]
        return k, d, np.abs(d) < _WINDOW * self.h

    def y(self, k: int, u: np.ndarray) -> np.ndarray:
        _, un, vals = self.windows[k]
        return _local_interp(un, vals, u, _STENCIL + 2)

    def q_t(self, t: np.ndarray) -> np.ndarray:
        return _local_interp(self.tnodes, self.tvals, t % PERIOD, _STENCIL)

    def root(self, t: np.ndarray) -> np.ndarray:
        """|z| = sqrt(q) at the times t."""
        k, d, inside = self.locate(t)
        out = np.empty(t.size)
        out[~inside] = np.sqrt(np.maximum(self.q_t(t[~inside]), 0.0))
        for kk in np.unique(k[inside]):
            sel = inside & (k == kk)
            u = np.cbrt(d[sel])
            out[sel] = np.abs(u) * self.y(kk, u)
        return out

    def integral_t(self, a, b):
        return _gauss(a, b, lambda x: 1.0 / self.q_t(x))

    def integral_u(self, k, ua, ub):
        return _gauss(ua, ub, lambda u: 3.0 / self.y(k, u) ** 2)


def _zero_misfit(q: np.ndarray, j: int, ts: float) -> float:
    """Least-squares misfit of sign(u) sqrt(q) by an odd-free polynomial in u = (t - ts)^(1/3)."""
    n = q.size
    h = PERIOD / n
    idx = np.arange(j - 8, j + 9)
    u = np.cbrt(idx * h - ts)
    y = np.sign(u) * np.sqrt(q[idx % n])
    A = np.vander(u, 9, increasing=True)[:, 1:]
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(np.sum((A @ coef - y) ** 2))


def _locate_zeros(q: np.ndarray) -> np.ndarray:
    n = q.size
    h = PERIOD / n
    qmax = np.max(q)
    out = []
    for j in range(n):
        a, b, c = q[j - 1], q[j], q[(j + 1) % n]
        if b > 0.05 * qmax or b > a or b >= c:
            continue
        if b <= 1e-20 * qmax:
            ts = j * h
        else:
            trial = j * h + h * np.linspace(-1, 1, 41)
            m = [_zero_misfit(q, j, s) for s in trial]
            k = int(np.argmin(m))
            lo, hi = trial[max(k - 1, 0)], trial[min(k + 1, 40)]
            ts = minimize_scalar(lambda s: _zero_misfit(q, j, s), bounds=(lo, hi), method="bounded", options={"xatol": 1e-15}).x
        k = int(round(ts / h))
        q1, q2 = q[(k + 1) % n], q[(k + 2) % n]
        q1m, q2m = q[(k - 1) % n], q[(k - 2) % n]
        if min(q1, q1m) > 0 and max(q2 / q1, q2m / q1m) > 2.5:
            raise CollisionError("collision not regularizable")
        out.append(ts % PERIOD)
    return np.unique(np.round(np.asarray(out), 15))


def q_to_z(q, zero_count_parity: str, sign: int = 1) -> ZLoop:
    """Invert z -> z(tau_z(.))^2 for samples q on the uniform period-2 t-grid.

    The sign argument fixes z on the arc that starts at t = 0.
    """
    q = np.asarray(q, dtype=float)
    n = q.size
    grid = LoopGrid(n)
    if np.min(q) < -1e-14 * np.max(np.abs(q)):
        raise ValueError("q must be nonnegative")
    q = np.maximum(q, 0.0)
    if zero_count_parity not in ("even", "odd"):
        raise ValueError("zero_count_parity must be 'even' or 'odd'")
    zeros = _locate_zeros(q)
    one_periodic = np.allclose(q, np.roll(q, n // 2), rtol=0, atol=1e-10 * np.max(q))
    per_period = zeros.size // 2 if one_periodic else zeros.size
    if per_period % 2 != (zero_count_parity == "odd"):
        raise ValueError(f"parity mismatch: {per_period} zeros per period")
    if one_periodic:
        cls = SymmetryClass.ANTIPERIODIC if per_period % 2 else SymmetryClass.PERIODIC1
    elif per_period % 2:
        raise ValueError("odd zero count on the doubled period cannot be represented on this grid")
    else:
        cls = SymmetryClass.PLAIN
    if zeros.size > 1 and np.min(np.diff(np.append(zeros, zeros[0] + PERIOD))) < 2.5 * _WINDOW * PERIOD / n:
        raise CollisionError("collisions too close for this grid")

    interp = _QInterpolant(q, zeros)
    tg = np.asarray(grid.tau)
    h = grid.h

    # each cell is integrated in u if its midpoint lies in a collision window
    k, dmid, inside = interp.locate(tg + 0.5 * h)
    ua = np.cbrt(dmid - 0.5 * h)
    ub = np.cbrt(dmid + 0.5 * h)
    cells = np.empty(n)
    cells[~inside] = interp.integral_t(tg[~inside], tg[~inside] + h)
    for kk in np.unique(k[inside]):
        sel = inside & (k == kk)
        cells[sel] = interp.integral_u(kk, ua[sel], ub[sel])
    if not np.all(np.isfinite(cells)) or np.any(cells <= 0):
        raise CollisionError("collision not regularizable")
    F = np.concatenate(([0.0], np.cumsum(cells)))
    total = F[-1]
    goal = tg * total / PERIOD

    # locate tau_i in the table of cumulative integrals, then bisect inside the cell
    j = np.clip(np.searchsorted(F, goal, side="right") - 1, 0, n - 1)
    lo = np.where(inside[j], ua[j], tg[j])
    hi = np.where(inside[j], ub[j], tg[j] + h)
    a0 = lo.copy()
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        val = np.empty(n)
        o = ~inside[j]
        val[o] = interp.integral_t(a0[o], mid[o])
        for kk in np.unique(k[j][inside[j]]):
            sel = inside[j] & (k[j] == kk)
            val[sel] = interp.integral_u(kk, a0[sel], mid[sel])
        below = F[j] + val < goal
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    x = 0.5 * (lo + hi)
    x = np.where(F[j] == goal, a0, x)
    zj = np.where(inside[j], interp.zeros[k[j]] if zeros.size else 0.0, 0.0)
    t = np.where(inside[j], zj + x**3, x)

    mag = np.empty(n)
    o = ~inside[j]
    mag[o] = interp.root(x[o])
    for kk in np.unique(k[j][inside[j]]):
        sel = inside[j] & (k[j] == kk)
        mag[sel] = np.abs(x[sel]) * interp.y(kk, x[sel])
    v = mag
    if zeros.size:
        flips = np.sum((_unwrap(t)[:, None] > zeros[None, :] + 1e-14) & (zeros[None, :] > 1e-14), axis=1)
        v = v * (-1.0) ** flips
    return ZLoop(grid, sign * v, cls)


def _unwrap(t):
    return np.where(t < -1e-14, t + PERIOD, t)
