"""Action functionals on regularized loops and their L2 gradients.

Q is the regularized Kepler action, A the mean interaction and I the
instantaneous interaction. B_r = Q(z1) + Q(z2) + r*I + (1-r)*A
interpolates between the mean (r=0) and instantaneous (r=1) problems.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import exp_sums, series_eval
from .grid import ZLoop, ZPair, derivative, dnorm2, norm2, resample, second_derivative
from .levi_civita import PERIOD, TimeChange, loop_zeros


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    N: float = 2.0
    r: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ValueError("r must lie in [0, 1]")
        if not self.N > 0:
            raise ValueError("N must be positive")


@dataclass(frozen=True)
class Momentum:
    eta1: ZLoop
    eta2: ZLoop


# -- Kepler part -------------------------------------------------------------


def eval_Q(z: ZLoop, N: float = 2.0) -> float:
    nz = norm2(z)
    return 2.0 * nz * dnorm2(z) + N / nz


def grad_Q(z: ZLoop, N: float = 2.0) -> ZLoop:
    nz = norm2(z)
    dd = second_derivative(z).values
    v = -4.0 * nz * dd + 4.0 * dnorm2(z) * z.values - (2.0 * N / nz**2) * z.values
    return z.with_values(v)


# -- mean interaction --------------------------------------------------------


def _moments(z: ZPair):
    n1, n2 = norm2(z.z1), norm2(z.z2)
    s1 = norm2(z.z1.with_values(z.z1.values**2))
    s2 = norm2(z.z2.with_values(z.z2.values**2))
    D = s1 * n2 - s2 * n1
    if not D > 0:
        raise DomainError("outside H_av: mean positions are not ordered")
    return n1, n2, s1, s2, D


def eval_A(z: ZPair) -> float:
    n1, n2, _, _, D = _moments(z)
    return -n1 * n2 / D


def grad_A(z: ZPair) -> tuple[ZLoop, ZLoop]:
    n1, n2, s1, s2, D = _moments(z)
    x1, x2 = z.z1.values, z.z2.values
    g1 = (-2.0 * n2**2 * s1 / D**2) * x1 + (4.0 * n1 * n2**2 / D**2) * x1**3
    g2 = (2.0 * n1**2 * s2 / D**2) * x2 - (4.0 * n1**2 * n2 / D**2) * x2**3
    return z.z1.with_values(g1), z.z2.with_values(g2)


# -- instantaneous interaction -----------------------------------------------
#
# With psi = tau_1 o t_2 and Delta(s) = z2(s)^2 - z1(psi(s))^2 < 0,
#     I = (1/||z2||^2) * mean_s z2(s)^2 / Delta(s).
# All integrands below are written in the variable s of z2, where they are
# smooth even at the collisions of the second electron.


def _antiderivative_tail(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """int_x^2 f for f = Re sum a_k exp(i pi k s), evaluated at points x in [0, 2]."""
    k = np.pi * np.arange(a.size)
    b = np.zeros_like(a)
    b[1:] = a[1:] / (1j * k[1:])
    const = np.sum(b).real
    return a[0].real * (PERIOD - x) + const - series_eval(b, x)[0]


def _moment_s(a: np.ndarray) -> float:
    """mean over [0, 2) of s*f(s) for f = Re sum a_k exp(i pi k s)."""
    k = np.pi * np.arange(a.size)
    return float(a[0].real + np.sum((a[1:] / (1j * k[1:])).real))


def _coefficient_adjoint(S: np.ndarray, n: int) -> np.ndarray:
    """Vector c with Re sum_k a_k(x) S_k = sum_j x_j c_j, a(x) the series coefficients of x."""
    w = np.full(S.size, 2.0 / n)
    w[0] = w[-1] = 1.0 / n
    y = np.zeros(n, dtype=complex)
    y[: S.size] = w * S
    return np.fft.fft(y).real


def _series(values: np.ndarray) -> np.ndarray:
    n = values.size
    c = np.fft.rfft(values)
    a = 2.0 * c / n
    a[0] = c[0] / n
    a[-1] = c[-1].real / n
    return a


_OVERSAMPLE = 4


def _restrict(values: np.ndarray, n: int) -> np.ndarray:
    """Adjoint of trigonometric interpolation from n points to values.size points.

    Both sides use the mean as inner product.
    """
    m = values.size
    c = np.fft.rfft(values)[: n // 2 + 1] * (n / m)
    c[-1] = c[-1].real
    return np.fft.irfft(c, n)


class _Interaction:
    """Shared quantities for evaluating I and its gradient at one pair.

    The integral over the variable of z2 is taken on a grid refined by
    `oversample`, with z2 replaced by its trigonometric interpolant. The
    map psi stretches that variable by up to a factor ||z1||^2 max z2^2 /
    (||z2||^2 min z1^2), and without refinement the top modes of z1 alias.
    """

    def __init__(self, z: ZPair, oversample: int = _OVERSAMPLE):
        z1, z2 = z.z1, z.z2
        self.z = z
        if np.any(z1.values <= 0) and np.any(z1.values >= 0):
            raise DomainError("outside H_in: z1 must not vanish")
        self.zf = resample(z2, oversample * z2.n)
        self.tc1 = TimeChange(z1)
        self.tc2 = TimeChange(self.zf)
        self.n1, self.n2 = self.tc1.norm2, self.tc2.norm2
        self.t2 = self.tc2.t_of_tau
        self.psi = self.tc1.tau_at(self.t2)
        self.z1psi, self.dz1psi, _ = z1.eval_with_derivatives(self.psi)
        x2 = self.zf.values
        self.delta = x2**2 - self.z1psi**2
        if not np.all(self.delta < 0):
            raise DomainError("outside H_in: positions touch or cross")
        self.J = float(np.mean(x2**2 / self.delta))
        self.value = self.J / self.n2

    def gradient(self) -> tuple[ZLoop, ZLoop]:
        """Exact gradient of the discretized value, as a grid L2 gradient.

        Every perturbation is pushed through the trigonometric interpolants
        and the spectral time changes that the evaluation uses, so inner
        products with it reproduce directional derivatives to round-off.
        """
        z1, z2, zf = self.z.z1, self.z.z2, self.zf
        n, m = z1.n, zf.n
        n1, n2 = self.n1, self.n2
        x1, x2 = z1.values, zf.values
        d2 = self.delta**2
        dt1 = 1.0 + series_eval(self.tc1.series, self.psi)[1]
        u, du = self.z1psi, self.dz1psi

        # z1 enters through z1(psi) and through t_1 inside psi
        K = n // 2
        kk = np.pi * np.arange(K + 1)
        kk[0] = 1.0
        alpha = 2.0 * x2**2 * u / d2 / m
        beta = -alpha * du / dt1
        S = exp_sums(self.psi, alpha, K)
        T = (exp_sums(self.psi, beta, K) - np.sum(beta)) / (1j * kk)
        T[0] = 0.0
        cz = _coefficient_adjoint(S, n)
        cw = _coefficient_adjoint(T, n)
        R1 = cz + 2.0 * x1 * cw / n1 - (2.0 / (n * n1**2)) * np.dot(cw, x1**2) * x1
        grad1 = n * R1 / n2

        # the refined z2 enters through z2^2, t_2 and the normalization
        Kf = m // 2
        kf = np.pi * np.arange(Kf + 1)
        kf[0] = 1.0
        mu = -(u**2) / d2
        gamma = 2.0 * x2**2 * u * du / (d2 * dt1) / m
        # sums over the uniform grid are a discrete Fourier transform
        T2 = (m * np.fft.ifft(gamma)[: Kf + 1] - np.sum(gamma)) / (1j * kf)
        T2[0] = 0.0
        cg = _coefficient_adjoint(T2, m)
        R2 = 2.0 * x2 * mu / m + 2.0 * x2 * cg / n2 - (2.0 / (m * n2**2)) * np.dot(cg, x2**2) * x2
        gf = m * R2 / n2 - 2.0 * self.J * x2 / n2**2
        return z1.with_values(grad1), z2.with_values(_restrict(gf, n))

    def formula_gradient(self) -> tuple[ZLoop, ZLoop]:
        """Continuous L2 gradient sampled on the grid.

        It has a |xi|^(2/3) cusp where the second electron collides, so grid
        inner products with it converge only like h^(5/3).
        """
        z1, z2 = self.z.z1, self.z.z2
        n1, n2 = self.n1, self.n2
        x1, x2 = z1.values, z2.values
        d2 = self.delta**2
        grid = z1.grid
        s = np.asarray(grid.tau)
        p2 = self.t2 - s

        # first electron
        g = x2**2 / d2 * (self.dz1psi / self.z1psi)
        ga = _series(g)
        mom_g = _moment_s(ga) + float(np.mean(g * p2))
        phi = self.tc2.tau_at(self.tc1.t_of_tau)
        phi = np.where(phi >= PERIOD, phi - PERIOD, phi)
        z2phi = z2(phi)
        tail = _antiderivative_tail(ga, phi)
        # the tail jumps from int g to 0 across the anchor; use the mean at s=0
        tail[0] = 0.5 * _antiderivative_tail(ga, np.array([0.0]))[0]
        v1 = 2.0 * (n2 / n1) * x1**3 / (z2phi**2 - x1**2) ** 2
        v23 = 4.0 * x1 * (mom_g - tail)
        grad1 = (v1 + v23) / n2

        # second electron
        dz2 = derivative(z2).values
        hh = x2 * dz2 / d2
        ha = _series(hh)
        mom_h = _moment_s(ha) + float(np.mean(hh * p2))
        tail_h = _antiderivative_tail(ha, s)
        tail_h[0] = 0.5 * _antiderivative_tail(ha, np.array([0.0]))[0]
        grad2 = -(2.0 * x2**3 / d2 + 4.0 * x2 * (mom_h - tail_h)) / n2
        return z1.with_values(grad1), z2.with_values(grad2)


def _interaction(z: ZPair) -> _Interaction:
    it = z._cache.get("interaction")
    if it is None:
        it = _Interaction(z)
        z._cache["interaction"] = it
    return it


def eval_I(z: ZPair) -> float:
    return _interaction(z).value


def eval_I_first_form(z: ZPair, panels: int = 24, order: int = 20) -> float:
    """-(1/||z1||^2) int z1^2/(z1^2 - z2^2 o tau_2 o t_1), written in the variable of z1.

    Independent check of the representation used by eval_I. The integrand
    behaves like |tau - tau0|^(2/3) where the second electron collides, so
    windows around those points use tau = tau0 + w^3, in which it is smooth.
    """
    tc1, tc2 = TimeChange(z.z1), TimeChange(z.z2)
    gx, gw = np.polynomial.legendre.leggauss(order)

    def integrand(tau):
        phi = tc2.tau_at(tc1.t_at(tau))
        x1 = z.z1(tau)
        den = x1**2 - z.z2(phi) ** 2
        if not np.all(den > 0):
            raise DomainError("outside H_in: positions touch or cross")
        return x1**2 / den

    def gauss(a, b, f):
        a, b = np.atleast_1d(a), np.atleast_1d(b)
        x = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * gx
        return float(np.sum(0.5 * (b - a)[:, None] * f(x.ravel()).reshape(x.shape) * gw))

    zeros = loop_zeros(z.z2)
    if zeros.size == 0:
        edges = np.linspace(0.0, PERIOD, 8 * panels + 1)
        total = gauss(edges[:-1], edges[1:], integrand)
        return -total / PERIOD / tc1.norm2
    centers = np.sort(tc1.tau_at(tc2.t_at(zeros)) % PERIOD)
    gaps = np.diff(np.append(centers, centers[0] + PERIOD))
    delta = min(0.25, 0.4 * float(gaps.min()))
    total = 0.0
    wmax = delta ** (1.0 / 3.0)
    wedges = np.linspace(-wmax, wmax, panels + 1)
    for c, gap in zip(centers, gaps):
        total += gauss(wedges[:-1], wedges[1:], lambda w, c=c: integrand(c + w**3) * 3.0 * w**2)
        edges = np.linspace(c + delta, c + gap - delta, panels + 1)
        total += gauss(edges[:-1], edges[1:], integrand)
    return -total / PERIOD / tc1.norm2


def grad_I_formula(z: ZPair) -> tuple[ZLoop, ZLoop]:
    return _Interaction(z, oversample=1).formula_gradient()


def grad_I(z: ZPair) -> tuple[ZLoop, ZLoop]:
    it = _interaction(z)
    g = z._cache.get("grad_I")
    if g is None:
        g = it.gradient()
        z._cache["grad_I"] = g
    return g


# -- combined functionals ----------------------------------------------------


def eval_B(z: ZPair, p: ModelParams = ModelParams()) -> float:
    out = eval_Q(z.z1, p.N) + eval_Q(z.z2, p.N)
    if p.r > 0:
        out += p.r * eval_I(z)
    if p.r < 1:
        out += (1.0 - p.r) * eval_A(z)
    return out


def grad_interaction(z: ZPair, r: float) -> tuple[np.ndarray, np.ndarray]:
    g1 = np.zeros(z.grid.n)
    g2 = np.zeros(z.grid.n)
    if r > 0:
        a, b = grad_I(z)
        g1 += r * a.values
        g2 += r * b.values
    if r < 1:
        a, b = grad_A(z)
        g1 += (1.0 - r) * a.values
        g2 += (1.0 - r) * b.values
    return g1, g2


def eval_interaction(z: ZPair, r: float) -> float:
    out = 0.0
    if r > 0:
        out += r * eval_I(z)
    if r < 1:
        out += (1.0 - r) * eval_A(z)
    return out


def grad_B(z: ZPair, p: ModelParams = ModelParams()) -> tuple[ZLoop, ZLoop]:
    g1, g2 = grad_interaction(z, p.r)
    q1, q2 = grad_Q(z.z1, p.N), grad_Q(z.z2, p.N)
    return q1.with_values(q1.values + g1), q2.with_values(q2.values + g2)


def decoupled_F(z: ZPair, r: float, N: float = 2.0) -> tuple[ZLoop, ZLoop]:
    """Mean-interaction equations with the force on the inner electron scaled by r.

    At r=1 these are grad B_av divided by 4||z_i||^2; at r=0 the second
    component is the pure Kepler equation.
    """
    n1, n2, s1, s2, D = _moments(z)
    z1, z2 = z.z1, z.z2
    a1 = dnorm2(z1) / n1 - N / (2.0 * n1**3) - n2**2 * s1 / (2.0 * n1 * D**2)
    b1 = n2**2 / D**2
    a2 = dnorm2(z2) / n2 - N / (2.0 * n2**3) + r * n1**2 * s2 / (2.0 * n2 * D**2)
    b2 = -r * n1**2 / D**2
    x1, x2 = z1.values, z2.values
    f1 = -second_derivative(z1).values + a1 * x1 + b1 * x1**3
    f2 = -second_derivative(z2).values + a2 * x2 + b2 * x2**3
    return z1.with_values(f1), z2.with_values(f2)


def mean_ode_coefficients(z: ZPair, N: float = 2.0):
    """(a1, b1, a2, b2) with z_i'' = a_i z_i + b_i z_i^3 at critical points of B_av."""
    n1, n2, s1, s2, D = _moments(z)
    a1 = dnorm2(z.z1) / n1 - N / (2.0 * n1**3) - n2**2 * s1 / (2.0 * n1 * D**2)
    b1 = n2**2 / D**2
    a2 = dnorm2(z.z2) / n2 - N / (2.0 * n2**3) + n1**2 * s2 / (2.0 * n2 * D**2)
    b2 = -(n1**2) / D**2
    return a1, b1, a2, b2


# -- Hamiltonian side --------------------------------------------------------


def legendre(z: ZLoop, N: float = 2.0) -> ZLoop:
    """Momentum eta = 4||z||^2 z' conjugate to z."""
    return derivative(z) * (4.0 * norm2(z))


def eval_H(z: ZPair, eta: Momentum, p: ModelParams = ModelParams()) -> float:
    out = 0.0
    for zi, ei in ((z.z1, eta.eta1), (z.z2, eta.eta2)):
        nz = norm2(zi)
        out += norm2(ei) / (8.0 * nz) - p.N / nz
    return out - eval_interaction(z, p.r)


def hamilton_residual(z: ZPair, eta: Momentum, p: ModelParams = ModelParams()):
    """(z_i' - dH/deta_i, eta_i' + dH/dz_i) for i = 1, 2, as arrays."""
    gi = grad_interaction(z, p.r)
    out = []
    for zi, ei, gint in ((z.z1, eta.eta1, gi[0]), (z.z2, eta.eta2, gi[1])):
        nz = norm2(zi)
        dH_deta = ei.values / (4.0 * nz)
        dH_dz = -norm2(ei) * zi.values / (4.0 * nz**2) + 2.0 * p.N * zi.values / nz**2 - gint
        out.append(derivative(zi).values - dH_deta)
        out.append(derivative(ei).values + dH_dz)
    return tuple(out)
