"""Discrete loops on the period-2 grid.

A loop is stored by its samples at tau_j = j*h, h = 2/n. Loops of period 1
and antiperiodic loops (z(tau+1) = -z(tau)) live on the same grid, so all
integrals are taken over [0, 2) with the weight h/2, which equals the
integral over [0, 1] for every class used by the solvers.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._kernels import series_eval


class SymmetryClass(enum.Enum):
    PLAIN = "Plain"
    PERIODIC1 = "Periodic1"
    ANTIPERIODIC = "Antiperiodic"
    SYMMETRIC_PERIODIC1 = "SymmetricPeriodic1"
    SYMMETRIC_ANTIPERIODIC = "SymmetricAntiperiodic"

    @property
    def shift_sign(self) -> int:
        """+1 if z(tau+1) = z(tau), -1 if antiperiodic, 0 if unconstrained."""
        if self in (SymmetryClass.PERIODIC1, SymmetryClass.SYMMETRIC_PERIODIC1):
            return 1
        if self in (SymmetryClass.ANTIPERIODIC, SymmetryClass.SYMMETRIC_ANTIPERIODIC):
            return -1
        return 0

    @property
    def symmetric(self) -> bool:
        return self in (SymmetryClass.SYMMETRIC_PERIODIC1, SymmetryClass.SYMMETRIC_ANTIPERIODIC)

    @property
    def base(self) -> "SymmetryClass":
        """The class without the reflection constraint."""
        if self is SymmetryClass.SYMMETRIC_PERIODIC1:
            return SymmetryClass.PERIODIC1
        if self is SymmetryClass.SYMMETRIC_ANTIPERIODIC:
            return SymmetryClass.ANTIPERIODIC
        return self


@dataclass(frozen=True)
class LoopGrid:
    n: int

    def __post_init__(self):
        if self.n < 16 or self.n % 4:
            raise ValueError(f"grid size must be a multiple of 4 and at least 16, got {self.n}")

    @property
    def h(self) -> float:
        return 2.0 / self.n

    @cached_property
    def tau(self) -> np.ndarray:
        t = np.arange(self.n) * self.h
        t.flags.writeable = False
        return t

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """pi*k for the rfft modes k = 0..n/2."""
        return np.pi * np.arange(self.n // 2 + 1)


@dataclass(frozen=True, eq=False)
class ZLoop:
    grid: LoopGrid
    values: np.ndarray
    cls: SymmetryClass = SymmetryClass.PLAIN

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {v.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: LoopGrid, f, sym: SymmetryClass = SymmetryClass.PLAIN) -> "ZLoop":
        return cls(grid, f(np.asarray(grid.tau)), sym)

    @property
    def n(self) -> int:
        return self.grid.n

    def with_values(self, values) -> "ZLoop":
        return ZLoop(self.grid, values, self.cls)

    def __neg__(self) -> "ZLoop":
        return self.with_values(-self.values)

    def __add__(self, other: "ZLoop") -> "ZLoop":
        _check_grid(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ZLoop") -> "ZLoop":
        _check_grid(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c: float) -> "ZLoop":
        return self.with_values(c * self.values)

    __rmul__ = __mul__

    @cached_property
    def rfft(self) -> np.ndarray:
        return np.fft.rfft(self.values)

    @cached_property
    def series(self) -> np.ndarray:
        """Coefficients a_k with z(x) = Re sum a_k exp(i pi k x), for off-grid evaluation."""
        return series_coefficients(self.rfft, self.n)

    def __call__(self, x) -> np.ndarray:
        return series_eval(self.series, np.atleast_1d(np.asarray(x, dtype=float)))[0]

    def eval_with_derivatives(self, x):
        """(z, z', z'') of the trigonometric interpolant at arbitrary points."""
        return series_eval(self.series, np.atleast_1d(np.asarray(x, dtype=float)))


@dataclass(frozen=True, eq=False)
class ZPair:
    z1: ZLoop
    z2: ZLoop
    meta: dict = field(default_factory=dict, compare=False)
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        _check_grid(self.z1, self.z2)

    @property
    def grid(self) -> LoopGrid:
        return self.z1.grid

    def __iter__(self):
        yield self.z1
        yield self.z2


def _check_grid(u: ZLoop, v: ZLoop):
    if u.grid.n != v.grid.n:
        raise ValueError("incompatible grids")


def series_coefficients(c: np.ndarray, n: int) -> np.ndarray:
    """Turn rfft output of n real samples into evaluation coefficients."""
    a = 2.0 * c / n
    a[0] = c[0] / n
    a[-1] = c[-1].real / n
    return a


def inner(u: ZLoop, v: ZLoop) -> float:
    """L2 product normalized to the unit circle, (h/2) sum over the period-2 grid."""
    _check_grid(u, v)
    return 0.5 * u.grid.h * float(np.dot(u.values, v.values))


def norm2(z: ZLoop) -> float:
    return inner(z, z)


def dnorm2(z: ZLoop) -> float:
    """||z'||^2 computed from Fourier coefficients.

    Equals -<z'', z> exactly for the second derivative used by the
    gradients, including the Nyquist mode.
    """
    c = z.rfft
    k = z.grid.wavenumbers
    w = np.full(c.size, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return float(np.sum(w * k * k * np.abs(c) ** 2)) / z.n**2


def derivative(z: ZLoop) -> ZLoop:
    """Spectral derivative; the Nyquist mode is dropped."""
    c = 1j * z.grid.wavenumbers * np.fft.rfft(z.values - np.mean(z.values))
    c[-1] = 0.0
    return ZLoop(z.grid, np.fft.irfft(c, z.n), z.cls.base)


def second_derivative(z: ZLoop) -> ZLoop:
    k = z.grid.wavenumbers
    # the mean would only feed round-off into the amplified top modes
    c = np.fft.rfft(z.values - np.mean(z.values))
    return ZLoop(z.grid, np.fft.irfft(-(k * k) * c, z.n), z.cls)


def shift_index(n: int) -> np.ndarray:
    """Index map j -> j + n/2, i.e. tau -> tau + 1."""
    return (np.arange(n) + n // 2) % n


def reflect_index(n: int) -> np.ndarray:
    """Index map j -> n/2 - j, i.e. tau -> 1 - tau."""
    return (n // 2 - np.arange(n)) % n


def project_symmetry(z: ZLoop, cls: SymmetryClass) -> ZLoop:
    """Orthogonal projection onto a symmetry class; exactly idempotent."""
    v = z.values
    s = cls.shift_sign
    if s:
        v = 0.5 * (v + s * v[shift_index(z.n)])
    if cls.symmetric:
        v = 0.5 * (v + v[reflect_index(z.n)])
    return ZLoop(z.grid, v, cls)


def shift(z: ZLoop, m: int) -> ZLoop:
    """z(tau + m*h)."""
    return z.with_values(np.roll(z.values, -m))


def reverse(z: ZLoop) -> ZLoop:
    """z(-tau)."""
    return z.with_values(z.values[(-np.arange(z.n)) % z.n])


def resample(z: ZLoop, n: int) -> ZLoop:
    """Trigonometric interpolation onto a grid with n points."""
    if n == z.n:
        return z
    c = z.rfft
    m = n // 2 + 1
    out = np.zeros(m, dtype=complex)
    k = min(m, c.size)
    out[:k] = c[:k]
    if n < z.n:
        out[-1] = 2.0 * out[-1].real
    elif z.n < n:
        out[c.size - 1] *= 0.5
    return ZLoop(LoopGrid(n), np.fft.irfft(out * (n / z.n), n), z.cls)


def drop_nyquist(z: ZLoop) -> ZLoop:
    """Remove the alternating mode (-1)^j, which spectral differentiation cannot see."""
    c = np.fft.rfft(z.values)
    c[-1] = 0.0
    return z.with_values(np.fft.irfft(c, z.n))
