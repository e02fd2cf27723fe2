"""Newton iteration on symmetric loops, closed-form seeds and homotopy continuation.

Unknowns are coordinates in an orthonormal basis of the symmetric subspace
with the Nyquist mode removed: one basis vector per orbit of grid indices
under tau -> tau+1 and tau -> 1-tau, orthogonalized against (-1)^j. In
these coordinates the Jacobian of an L2 gradient is the symmetric Hessian
restricted to the subspace.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .functionals import DomainError, ModelParams, decoupled_F, grad_B, grad_Q
from .grid import LoopGrid, SymmetryClass, ZLoop, ZPair, drop_nyquist, norm2, project_symmetry, resample
from .levi_civita import CollisionError, DegenerateLoop

log = logging.getLogger(__name__)

Unknown = Union[ZLoop, ZPair]
GradFn = Callable


class SolverError(RuntimeError):
    def __init__(self, message: str, report: "SolveReport | None" = None):
        super().__init__(message)
        self.report = report


class ContinuationStalled(RuntimeError):
    def __init__(self, message: str, trace: "ContinuationTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class SolveOptions:
    grad_tol: float = 1e-9
    max_iter: int = 100
    damping: float = 1e-3
    fd_step: float = 1e-6

    def __post_init__(self):
        for name in ("grad_tol", "max_iter", "damping", "fd_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.grad_tol < 1e-4:
            raise ValueError("grad_tol must be below 1e-4")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    final_grad_norm: float
    z: Unknown
    min_singular_value: float = float("nan")
    history: list = field(default_factory=list)
    jacobian_evaluations: int = 0
    tolerance: float = float("nan")
    message: str = ""


@dataclass
class ContinuationTrace:
    stages: list = field(default_factory=list)
    schedule: dict = field(default_factory=dict)

    def add(self, label: str, r: float, report: SolveReport):
        self.stages.append((label, r, report))

    @property
    def final(self) -> SolveReport:
        return self.stages[-1][2]


# -- symmetric coordinates ---------------------------------------------------


class _Basis:
    """Orthonormal basis of the symmetric subspace for one or two loops."""

    def __init__(self, template: Unknown):
        loops = list(template) if isinstance(template, ZPair) else [template]
        self.pair = isinstance(template, ZPair)
        self.grid = loops[0].grid
        self.classes = [z.cls for z in loops]
        self.blocks = [self._block(z.grid, z.cls) for z in loops]
        self.sizes = [b.shape[1] for b in self.blocks]

    @staticmethod
    def _block(grid: LoopGrid, cls: SymmetryClass) -> np.ndarray:
        n = grid.n
        cols = []
        seen = set()
        for j in range(n):
            if j in seen:
                continue
            e = np.zeros(n)
            e[j] = 1.0
            v = project_symmetry(ZLoop(grid, e), cls).values
            support = set(np.flatnonzero(np.abs(v) > 1e-14))
            seen |= support | {j}
            if np.any(np.abs(v) > 1e-14):
                cols.append(v / np.linalg.norm(v))
        # drop the Nyquist mode: first derivatives annihilate it, so keeping
        # it would make D(D z) and z'' disagree on the solution
        Q = np.column_stack(cols)
        u = np.where(np.arange(n) % 2, -1.0, 1.0) / math.sqrt(n)
        Q = Q - np.outer(u, u @ Q)
        U, S, _ = np.linalg.svd(Q, full_matrices=False)
        U = U[:, S > 0.5]
        return U / math.sqrt(0.5 * grid.h)

    @property
    def size(self) -> int:
        return sum(self.sizes)

    def coords(self, z: Unknown) -> np.ndarray:
        loops = list(z) if self.pair else [z]
        h2 = 0.5 * self.grid.h
        return np.concatenate([h2 * (b.T @ l.values) for b, l in zip(self.blocks, loops)])

    def loops(self, x: np.ndarray) -> list[np.ndarray]:
        out, i = [], 0
        for b, m in zip(self.blocks, self.sizes):
            out.append(b @ x[i:i + m])
            i += m
        return out

    def build(self, x: np.ndarray, meta=None) -> Unknown:
        vals = self.loops(x)
        loops = [ZLoop(self.grid, v, c) for v, c in zip(vals, self.classes)]
        if self.pair:
            return ZPair(loops[0], loops[1], dict(meta or {}))
        return loops[0]

    def residual(self, g) -> np.ndarray:
        gs = list(g) if isinstance(g, tuple) else [g]
        h2 = 0.5 * self.grid.h
        return np.concatenate([h2 * (b.T @ gi.values) for b, gi in zip(self.blocks, gs)])


def _sup(g) -> float:
    gs = list(g) if isinstance(g, tuple) else [g]
    return max(float(np.max(np.abs(x.values))) for x in gs)


def _project(g, classes):
    """Projection onto the space the solver works in."""
    gs = list(g) if isinstance(g, tuple) else [g]
    out = tuple(drop_nyquist(project_symmetry(x, c)) for x, c in zip(gs, classes))
    return out if len(out) > 1 else out[0]


def _admissible(z: Unknown) -> bool:
    if isinstance(z, ZPair):
        return bool(np.all(z.z1.values > 0)) and norm2(z.z2) > 0
    return norm2(z) > 0


class _Problem:
    def __init__(self, grad_fn: GradFn, z0: Unknown):
        self.grad_fn = grad_fn
        self.basis = _Basis(z0)
        self.meta = z0.meta if isinstance(z0, ZPair) else None
        self.evaluations = 0

    def evaluate(self, x: np.ndarray):
        """(z, projected gradient, coordinates of the gradient); raises DomainError."""
        z = self.basis.build(x, self.meta)
        if not _admissible(z):
            raise DomainError("iterate left the admissible set")
        try:
            g = self.grad_fn(z)
        except (CollisionError, DegenerateLoop) as exc:
            raise DomainError(str(exc)) from exc
        self.evaluations += 1
        g = _project(g, self.basis.classes)
        return z, g, self.basis.residual(g)

    def jacobian(self, x: np.ndarray, step: float) -> np.ndarray:
        m = x.size
        J = np.empty((m, m))
        for i in range(m):
            e = np.zeros(m)
            e[i] = step
            J[:, i] = (self.evaluate(x + e)[2] - self.evaluate(x - e)[2]) / (2.0 * step)
        return J


def gradient_floor(grad_fn: GradFn, z: Unknown, samples: int = 2, seed: int = 0) -> float:
    """Change of the gradient when every sample of z moves by about one ulp.

    Gradients containing z'' amplify the last bit of the top modes by
    (pi n/2)^2, so below this level no iterate can be told apart.
    """
    rng = np.random.default_rng(seed)
    loops = list(z) if isinstance(z, ZPair) else [z]
    g0 = grad_fn(z)
    g0 = list(g0) if isinstance(g0, tuple) else [g0]
    worst = 0.0
    for _ in range(samples):
        moved = [l.with_values(l.values * (1.0 + np.finfo(float).eps * rng.choice([-1.0, 1.0], l.n))) for l in loops]
        zz = ZPair(moved[0], moved[1], dict(z.meta)) if isinstance(z, ZPair) else moved[0]
        g1 = grad_fn(zz)
        g1 = list(g1) if isinstance(g1, tuple) else [g1]
        worst = max(worst, max(float(np.max(np.abs(a.values - b.values))) for a, b in zip(g0, g1)))
    return worst


def _polish(prob, svd, x, z, g, F, gnorm, tol, steps=6):
    """Extra chord steps after convergence while the step keeps shrinking.

    The sup-norm floor is set by the top modes; the low modes can still be
    corrected, which matters for quantities divided by z^2 near zeros.
    """
    U, S, Vt = svd
    keep = S > 1e-12 * S[0]
    last = np.inf
    for _ in range(steps):
        dx = -Vt[keep].T @ ((U[:, keep].T @ F) / S[keep])
        size = float(np.linalg.norm(dx))
        if size > 0.5 * last:
            break
        try:
            z_new, g_new, F_new = prob.evaluate(x + dx)
        except DomainError:
            break
        gn = _sup(g_new)
        if gn > tol:
            break
        x, z, g, F, gnorm, last = x + dx, z_new, g_new, F_new, gn, size
    return x, z, g, F, gnorm


def newton_solve(grad_fn: GradFn, z0: Unknown, opts: SolveOptions = SolveOptions()) -> SolveReport:
    """Levenberg-damped Newton on the symmetric subspace of z0's classes.

    The finite-difference Jacobian is reused while the residual contracts
    by a factor 10 per step and refreshed otherwise. Steps first try the
    undamped Newton direction; on failure the Levenberg parameter starts at
    damping * s_max * s_min and grows tenfold until the residual decreases.

    The stopping tolerance is max(grad_tol, 2 * gradient_floor) so that
    fine grids do not chase round-off; it is stored in report.tolerance.
    """
    prob = _Problem(grad_fn, z0)
    x = prob.basis.coords(z0)
    try:
        z, g, F = prob.evaluate(x)
    except DomainError as exc:
        raise SolverError(f"domain exit: initial point not admissible ({exc})") from exc
    gnorm = _sup(g)
    report = SolveReport(False, 0, gnorm, z)
    report.history.append(gnorm)
    report.tolerance = opts.grad_tol
    if gnorm <= opts.grad_tol:
        report.converged = True
        return report
    tol = max(opts.grad_tol, 2.0 * gradient_floor(grad_fn, z))
    report.tolerance = tol

    svd = None
    fresh = False
    stalls = 0
    for it in range(1, opts.max_iter + 1):
        if svd is None:
            J = prob.jacobian(x, opts.fd_step)
            report.jacobian_evaluations += 1
            svd = np.linalg.svd(J)
            fresh = True
            report.min_singular_value = float(svd[1][-1])
        U, S, Vt = svd
        UF = U.T @ F
        lam0 = opts.damping * S[0] * S[-1]
        accepted = False
        for lam in [0.0] + [lam0 * 10.0**k for k in range(12)]:
            if lam == 0.0 and S[-1] <= 1e-13 * S[0]:
                continue
            dx = -Vt.T @ (S * UF / (S * S + lam))
            try:
                z_new, g_new, F_new = prob.evaluate(x + dx)
            except DomainError:
                continue
            if np.linalg.norm(F_new) < np.linalg.norm(F):
                accepted = True
                break
        if not accepted:
            if not fresh:
                svd = None
                continue
            report.iterations = it
            if S[-1] <= 1e-12 * S[0]:
                raise SolverError("rank deficient", report)
            if gnorm <= 1e3 * tol:
                report.message = "stagnated near round-off"
                break
            raise SolverError("domain exit: no admissible descent step", report)
        ratio = np.linalg.norm(F_new) / np.linalg.norm(F)
        x, z, g, F = x + dx, z_new, g_new, F_new
        gnorm = _sup(g)
        report.history.append(gnorm)
        report.iterations = it
        report.z = z
        report.final_grad_norm = gnorm
        log.debug("newton it=%d grad=%.3e ratio=%.2e lam=%.1e", it, gnorm, ratio, lam)
        if gnorm <= tol:
            report.converged = True
            x, z, g, F, gnorm = _polish(prob, svd, x, z, g, F, gnorm, tol)
            break
        if fresh and ratio > 0.5:
            stalls += 1
            if stalls >= 2:
                report.message = "stagnated"
                break
        elif fresh:
            stalls = 0
        fresh = False
        if ratio > 0.1:
            svd = None
    report.z = z
    report.final_grad_norm = gnorm
    return report


# -- closed-form seeds -------------------------------------------------------


def kepler_amplitude(N: float = 2.0) -> float:
    """zeta with zeta*sin(pi*tau) critical for Q, from zeta^6 = 2N/pi^2."""
    return math.sqrt(2.0 * (N / (4.0 * math.pi**2)) ** (1.0 / 3.0))


def kepler_seed(grid: LoopGrid, N: float = 2.0) -> ZLoop:
    zeta = kepler_amplitude(N)
    return ZLoop(grid, zeta * np.sin(np.pi * np.asarray(grid.tau)), SymmetryClass.SYMMETRIC_ANTIPERIODIC)


def decoupled_constants(N: float = 2.0) -> tuple[float, float]:
    """(a, zbar1): mean of the Kepler q2 and the constant z1 solving the decoupled system at r=0."""
    a = 0.75 * kepler_amplitude(N) ** 2
    return a, math.sqrt(a / (1.0 - 1.0 / math.sqrt(N)))


def decoupled_seed(grid: LoopGrid, N: float = 2.0) -> ZPair:
    _, c = decoupled_constants(N)
    z1 = ZLoop(grid, np.full(grid.n, c), SymmetryClass.SYMMETRIC_PERIODIC1)
    return ZPair(z1, kepler_seed(grid, N), {"model": "decoupled", "r": 0.0, "N": N})


def model_gradient(model: str, r: float = 1.0, N: float = 2.0) -> GradFn:
    """Gradient map for a model name: kepler, av, in, interp or decoupled."""
    if model == "kepler":
        return lambda z: grad_Q(z, N)
    if model == "decoupled":
        return lambda z: decoupled_F(z, r, N)
    if model == "av":
        r = 0.0
    elif model == "in":
        r = 1.0
    elif model != "interp":
        raise ValueError(f"unknown model {model!r}")
    p = ModelParams(N, r)
    return lambda z: grad_B(z, p)


# -- continuation ------------------------------------------------------------


def _follow(trace, label, make_grad, z, steps, opts, r_end=1.0, min_step=1e-4):
    if steps <= 0:
        return z
    r, dr = 0.0, r_end / steps
    while r < r_end:
        step = min(dr, r_end - r)
        target = r_end if r_end - (r + step) < 1e-12 else r + step
        try:
            rep = newton_solve(make_grad(target), z, opts)
            ok = rep.converged
        except SolverError as exc:
            ok, rep = False, exc.report
        if ok:
            rep.z.meta.update({"stage": label, "r": target})
            trace.add(label, target, rep)
            z, r = rep.z, target
            dr = min(r_end / steps, 2.0 * step)
            continue
        dr = 0.5 * step
        if dr < min_step:
            raise ContinuationStalled(f"continuation stalled at r={r:.6g}", trace)
    return z


def continue_homotopy(stageA_steps: int, stageB_steps: int, opts: SolveOptions = SolveOptions(),
                      n: int = 512, N: float = 2.0, coarse_n: int | None = None,
                      r_end: float = 1.0) -> ContinuationTrace:
    """Two-stage continuation from the closed-form decoupled solution.

    Stage A deforms the decoupled equations into the mean-interaction
    equations; stage B deforms B_av into B_r up to r_end. With coarse_n the
    path is followed on a coarser grid and the endpoint is interpolated to
    n and polished.
    """
    work_n = coarse_n or n
    trace = ContinuationTrace(schedule={"stageA_steps": stageA_steps, "stageB_steps": stageB_steps,
                                        "n": n, "coarse_n": work_n, "min_step": 1e-4, "r_end": r_end})
    z = decoupled_seed(LoopGrid(work_n), N)
    start = newton_solve(model_gradient("decoupled", 0.0, N), z, opts)
    trace.add("seed", 0.0, start)
    z = start.z
    z = _follow(trace, "A", lambda r: model_gradient("decoupled", r, N), z, stageA_steps, opts)
    z = _follow(trace, "B", lambda r: model_gradient("interp", r, N), z, stageB_steps, opts, r_end=r_end)
    if work_n != n and (stageA_steps or stageB_steps):
        label, r, _ = trace.stages[-1]
        fine = ZPair(resample(z.z1, n), resample(z.z2, n), dict(z.meta))
        fine = ZPair(project_symmetry(fine.z1, fine.z1.cls), project_symmetry(fine.z2, fine.z2.cls), fine.meta)
        grad = model_gradient("decoupled", 1.0, N) if label == "A" else model_gradient("interp", r, N)
        rep = newton_solve(grad, fine, opts)
        if not rep.converged:
            raise ContinuationStalled(f"refinement to n={n} failed at r={r:.6g}", trace)
        rep.z.meta.update({"stage": label, "r": r})
        trace.add(label, r, rep)
    return trace


def hessian_spectrum(grad_fn: GradFn, z: Unknown, k: int = 5, fd_step: float = 1e-6) -> list[float]:
    """k smallest singular values of the FD Jacobian on the symmetric subspace."""
    prob = _Problem(grad_fn, z)
    J = prob.jacobian(prob.basis.coords(z), fd_step)
    s = np.linalg.svd(J, compute_uv=False)
    return sorted(float(v) for v in s[-k:])


def constant_mode_derivative(grad_fn: GradFn, z: ZPair, fd_step: float = 1e-6) -> float:
    """<1, D(grad_1)[1]>: response of the first component to adding a constant to z1."""
    one = np.ones(z.grid.n)

    def g1(eps):
        zz = ZPair(z.z1.with_values(z.z1.values + eps * one), z.z2, dict(z.meta))
        return float(np.mean(grad_fn(zz)[0].values))

    return (g1(fd_step) - g1(-fd_step)) / (2.0 * fd_step)
