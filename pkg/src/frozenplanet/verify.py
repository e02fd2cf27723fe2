"""Independent checks that a computed pair is a frozen planet orbit.

Everything here works on the physical trajectories or re-evaluates the
functionals; nothing reuses solver internals.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .functionals import (
    ModelParams,
    decoupled_F,
    eval_A,
    eval_B,
    eval_I,
    eval_Q,
    grad_A,
    grad_B,
    grad_I,
    grad_Q,
    hamilton_residual,
    legendre,
    Momentum,
)
from .grid import ZLoop, ZPair, derivative, drop_nyquist, project_symmetry, reflect_index
from .levi_civita import PERIOD, QOrbit, kepler_energy, loop_zeros, orbit_from_pair

MASK_RADIUS = 5
ZERO_VALUE_TOL = 1e-9
ZERO_SLOPE_TOL = 1e-3


@dataclass
class Check:
    passed: bool
    value: float
    tol: float


@dataclass
class VerificationReport:
    checks: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def add(self, name: str, value: float, tol: float, passed: bool | None = None):
        value = float(value)
        ok = (value <= tol) if passed is None else bool(passed)
        self.checks[name] = Check(bool(ok and np.isfinite(value)), value, tol)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def format(self) -> str:
        width = max((len(k) for k in self.checks), default=0)
        lines = []
        for name, c in self.checks.items():
            flag = "PASS" if c.passed else "FAIL"
            lines.append(f"{name:<{width}}  {flag}  value={c.value:.3e}  tol={c.tol:.1e}")
        for k, v in self.summary.items():
            lines.append(f"{k} = {v:.12g}" if isinstance(v, float) else f"{k} = {v}")
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": {k: {"passed": c.passed, "value": c.value, "tol": c.tol} for k, c in self.checks.items()},
            "summary": self.summary,
        }


# -- physical-side checks ----------------------------------------------------


def _forces(q: QOrbit, r: float, decoupled: float | None):
    """Right-hand sides of the two equations of motion."""
    gap = q.qbar1 - q.qbar2
    with np.errstate(divide="ignore"):
        k1 = -q.N / q.q1**2
        k2 = -q.N / q.q2**2
        if decoupled is not None:
            return k1 + 1.0 / gap**2, k2 - decoupled / gap**2
        inst = 1.0 / (q.q1 - q.q2) ** 2
        mean = 1.0 / gap**2
    return k1 + r * inst + (1.0 - r) * mean, k2 - r * inst - (1.0 - r) * mean


def collision_mask(q: QOrbit, radius: int = MASK_RADIUS) -> np.ndarray:
    """True at grid times farther than radius*h from every zero of q2."""
    keep = np.ones(q.t.size, dtype=bool)
    span = PERIOD * q.scale**3
    for tz in q.zeros2:
        d = np.abs((q.t - tz + 0.5 * span) % span - 0.5 * span)
        keep &= d > radius * q.h * (1 + 1e-9)
    return keep


def ode_residual(q: QOrbit, r: float = 1.0, decoupled: float | None = None) -> float:
    """sup |q_i*qdd_i - q_i*RHS_i| away from the collisions of q2.

    With decoupled=s the equations of the decoupled family are used instead:
    qdd1 = -N/q1^2 + 1/gap^2 and qdd2 = -N/q2^2 - s/gap^2.
    """
    f1, f2 = _forces(q, r, decoupled)
    keep = collision_mask(q)
    with np.errstate(invalid="ignore"):
        res1 = np.abs(q.q1 * (q.qdd1 - f1))
        res2 = np.abs(q.q2 * (q.qdd2 - f2))
    return float(max(np.max(res1[keep]), np.max(res2[keep])))


def conserved_quantity(q: QOrbit, r: float = 1.0, decoupled: float | None = None) -> np.ndarray:
    gap = q.qbar1 - q.qbar2
    e = q.E1 + q.E2
    if decoupled is not None:
        return e - (q.q1 - decoupled * q.q2) / gap**2
    return e + r / (q.q1 - q.q2) - (1.0 - r) * (q.q1 - q.q2) / gap**2


def _extrapolate(u: np.ndarray, e: np.ndarray) -> float:
    return float(np.polyval(np.polyfit(u, e, 2), 0.0))


def energy_jump(q: QOrbit, points: int = 4) -> float:
    """Largest mismatch of one-sided limits of E2 at the collisions.

    E2 is smooth in u = cbrt(t - t*), so each side is extrapolated in u.
    """
    worst = 0.0
    span = PERIOD * q.scale**3
    for tz in q.zeros2:
        d = (q.t - tz + 0.5 * span) % span - 0.5 * span
        order = np.argsort(np.abs(d))
        left = [j for j in order if d[j] < -1e-12 * q.h][:points]
        right = [j for j in order if d[j] > 1e-12 * q.h][:points]
        el = _extrapolate(np.cbrt(d[left]), q.E2[left])
        er = _extrapolate(np.cbrt(d[right]), q.E2[right])
        worst = max(worst, abs(el - er))
    return worst


def energy_checks(q: QOrbit, r: float = 1.0, decoupled: float | None = None):
    """(variation of the conserved quantity, jump of E2 across collisions)."""
    c = conserved_quantity(q, r, decoupled)
    keep = np.isfinite(c)
    return float(np.ptp(c[keep])), energy_jump(q)


def total_energy(q: QOrbit, r: float = 1.0, decoupled: float | None = None) -> float:
    c = conserved_quantity(q, r, decoupled)
    return float(np.mean(c[np.isfinite(c)]))


def kinetic_energy(q: QOrbit, r: float = 1.0) -> float:
    """Conserved quantity rebuilt from q and qdot alone, averaged away from collisions."""
    keep = collision_mask(q)
    e1 = 0.5 * q.qd1**2 - q.N / q.q1
    e2 = 0.5 * q.qd2**2 - q.N / q.q2
    gap = q.qbar1 - q.qbar2
    c = e1 + e2 + r / (q.q1 - q.q2) - (1.0 - r) * (q.q1 - q.q2) / gap**2
    return float(np.mean(c[keep]))


def rescale_check(q: QOrbit, c: float, r: float = 1.0) -> dict:
    """ODE residual of q_c(t) = c^2 q(t/c^3) and the error of the c^-2 energy law."""
    qc = q.rescaled(c)
    e0 = kinetic_energy(q, r)
    ec = kinetic_energy(qc, r)
    return {
        "residual": ode_residual(qc, r),
        "energy_error": abs(ec - e0 / c**2) / abs(e0 / c**2),
        "energy_ratio": ec / e0,
        "period_ratio": qc.period / q.period,
    }


def stage_a_bounds(q: QOrbit, s: float) -> dict:
    """Measures for the a-priori bounds of decoupled solutions.

    The bounds are stated for the normalization in which q2 is twice as
    long per period, so q is multiplied by 2^(2/3) and the force on q2 by
    2^(-4/3) before comparing.
    """
    cq = 2.0 ** (2.0 / 3.0)
    gap = q.qbar1 - q.qbar2
    f2 = s / gap**2 * 2.0 ** (-4.0 / 3.0)
    qmax = cq * float(np.max(q.q2))
    qbar = cq * q.qbar2
    return {
        "q1_variation": float(np.ptp(q.q1)),
        "half_qmax_lower": 0.5 - 0.5 * qmax,
        "qbar_lower": 0.5 * qmax - qbar,
        "qbar_upper": qbar - qmax,
        "qmax_upper": qmax - (2.0 + 0.5 * f2),
    }


# -- loop-side checks --------------------------------------------------------


def _value_and_slope(z: ZLoop, x: float):
    v, dv, _ = z.eval_with_derivatives(np.array([x]))
    return float(v[0]), float(dv[0])


def symmetry_check(z) -> dict:
    """Symmetry measures; accepts a ZPair or a single loop in the role of z2."""
    out = {}
    pair = isinstance(z, ZPair)
    z2 = z.z2 if pair else z
    if pair:
        out["z1'(0)"] = abs(_value_and_slope(z.z1, 0.0)[1])
        out["z1'(1/2)"] = abs(_value_and_slope(z.z1, 0.5)[1])
    out["z2(0)"] = abs(_value_and_slope(z2, 0.0)[0])
    out["z2'(1/2)"] = abs(_value_and_slope(z2, 0.5)[1])
    if pair:
        q = orbit_from_pair(z)
        ref = reflect_index(z.grid.n)
        out["q1 reflection"] = float(np.max(np.abs(q.q1 - q.q1[ref])))
        out["q2 reflection"] = float(np.max(np.abs(q.q2 - q.q2[ref])))
    return out


def _sup(g) -> float:
    """sup norm in the loop space of the solution: symmetric part, alternating grid mode removed.

    The antisymmetric part of a gradient at a symmetric loop vanishes
    identically; on the grid it only carries amplified round-off.
    """
    gs = g if isinstance(g, tuple) else (g,)
    return max(float(np.max(np.abs(drop_nyquist(project_symmetry(x, x.cls)).values))) for x in gs)


def correspondence_check(z, p: ModelParams = ModelParams(), tol: float = 1e-8, decoupled: float | None = None) -> dict:
    """Topology of the zero sets and criticality of all sign branches.

    For a single loop (Kepler problem) only z -> -z is checked.
    """
    out = {"topology": "ok"}
    if isinstance(z, ZPair):
        if np.any(z.z1.values <= 0) and np.any(z.z1.values >= 0):
            out["topology"] = "z1 has zeros"
        z2 = z.z2
    else:
        z2 = z
    zeros = loop_zeros(z2)
    per_period = zeros[zeros < 1.0 - 1e-12]
    if per_period.size != 1:
        out["topology"] = "wrong topological class"
        out["zeros_per_period"] = int(per_period.size)
        out["branches_critical"] = 0
        return out
    v0, s0 = _value_and_slope(z2, 0.0)
    out["zeros_per_period"] = 1
    out["zero_value"] = abs(v0)
    out["zero_slope"] = abs(s0)
    if abs(v0) > ZERO_VALUE_TOL or abs(s0) < ZERO_SLOPE_TOL:
        out["topology"] = "collision not transverse at tau=0"
    norms = []
    if isinstance(z, ZPair):
        if decoupled is not None:
            grad = lambda zz: decoupled_F(zz, decoupled, p.N)
        else:
            grad = lambda zz: grad_B(zz, p)
        for s1 in (1.0, -1.0):
            for s2 in (1.0, -1.0):
                zz = ZPair(z.z1 * s1, z.z2 * s2)
                norms.append(_sup(grad(zz)))
    else:
        for s in (1.0, -1.0):
            norms.append(_sup(grad_Q(z * s, p.N)))
    out["branch_grad_norms"] = norms
    out["branches_critical"] = int(sum(n <= tol for n in norms))
    out["branches"] = len(norms)
    return out


def legendre_check(z, p: ModelParams = ModelParams()) -> float:
    """sup norm of the Hamilton residual at eta = 4||z||^2 z'."""
    if isinstance(z, ZLoop):
        # single Kepler electron: z' = eta/(4||z||^2), eta' = -dH/dz
        from .grid import norm2

        nz = norm2(z)
        eta = legendre(z, p.N)
        dH_dz = -(eta.values @ eta.values) * 0.5 * z.grid.h * z.values / (4 * nz**2) + 2 * p.N * z.values / nz**2
        r1 = derivative(z).values - eta.values / (4 * nz)
        r2 = derivative(eta).values + dH_dz
        return _sup_band((r1, r2), z)
    eta = Momentum(legendre(z.z1, p.N), legendre(z.z2, p.N))
    return _sup_band(hamilton_residual(z, eta, p), z.z1)


def _sup_band(arrays, like: ZLoop) -> float:
    # momenta are odd about 1/2, so only the alternating mode is removed here
    return max(float(np.max(np.abs(drop_nyquist(ZLoop(like.grid, a)).values))) for a in arrays)


# -- gradient checks ---------------------------------------------------------


def _functional(functional_id: str):
    """(value, gradient) callables for 'Q', 'A', 'I' or 'B:<r>'."""
    if functional_id == "Q":
        return (lambda z: eval_Q(z.z1) + eval_Q(z.z2)), (lambda z: (grad_Q(z.z1), grad_Q(z.z2)))
    if functional_id == "A":
        return eval_A, grad_A
    if functional_id == "I":
        return eval_I, grad_I
    if functional_id.startswith("B"):
        r = float(functional_id.split(":")[1]) if ":" in functional_id else 1.0
        p = ModelParams(2.0, r)
        return (lambda z: eval_B(z, p)), (lambda z: grad_B(z, p))
    raise ValueError(f"unknown functional {functional_id!r}")


def random_direction(z: ZPair, rng: np.random.Generator, modes: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Band-limited random perturbation in the shift classes of z1 and z2."""
    tau = np.asarray(z.grid.tau)
    out = []
    for zi in z:
        sign = zi.cls.shift_sign
        v = np.zeros_like(tau)
        for k in range(modes + 1):
            if sign == 1 and k % 2:
                continue
            if sign == -1 and k % 2 == 0:
                continue
            a, b = rng.standard_normal(2) / (1.0 + k)
            v += a * np.cos(np.pi * k * tau) + b * np.sin(np.pi * k * tau)
        out.append(v)
    return out[0], out[1]


def gradcheck(functional_id: str, z: ZPair, n_dirs: int = 20, seed: int = 0, eps: float = 1e-4) -> float:
    """Max relative error of <grad, v> against a fourth-order central difference."""
    f, grad = _functional(functional_id)
    g1, g2 = grad(z)
    rng = np.random.default_rng(seed)
    h2 = 0.5 * z.grid.h
    worst = 0.0
    for _ in range(n_dirs):
        v1, v2 = random_direction(z, rng)

        def at(s):
            return f(ZPair(z.z1.with_values(z.z1.values + s * v1), z.z2.with_values(z.z2.values + s * v2)))

        fd = (8.0 * (at(eps) - at(-eps)) - (at(2 * eps) - at(-2 * eps))) / (12.0 * eps)
        an = h2 * (g1.values @ v1 + g2.values @ v2)
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-300))
    return worst


# -- full report -------------------------------------------------------------


def verify_kepler(z: ZLoop, N: float = 2.0, grad_tol: float = 1e-8) -> VerificationReport:
    from .grid import norm2

    rep = VerificationReport()
    rep.add("gradient", _sup(grad_Q(z, N)), grad_tol)
    e = kepler_energy(z, N)
    rep.add("energy variation", np.ptp(e), 1e-8)
    rep.add("energy negative", float(np.max(e)), 0.0, passed=np.max(e) < 0)
    for k, v in symmetry_check(z).items():
        rep.add(f"symmetry {k}", v, 1e-7)
    corr = correspondence_check(z, ModelParams(N, 1.0), grad_tol)
    rep.add("topology", 0.0 if corr["topology"] == "ok" else 1.0, 0.0, passed=corr["topology"] == "ok")
    if "branches" in corr:
        rep.add("sign branches critical", corr["branches"] - corr["branches_critical"], 0.0)
    rep.add("legendre", legendre_check(z, ModelParams(N, 1.0)), 1e-7)
    rep.summary = {"amplitude": float(np.max(np.abs(z.values))), "energy": float(np.mean(e)),
                   "qbar": norm2(z.with_values(z.values**2)) / norm2(z), "period": 1.0}
    return rep


def verify_pair(z: ZPair, r: float = 1.0, N: float = 2.0, decoupled: float | None = None,
                grad_tol: float = 1e-8) -> VerificationReport:
    """All checks for a converged pair of B_r, or of the decoupled family when decoupled=s."""
    p = ModelParams(N, r if decoupled is None else 0.0)
    rep = VerificationReport()
    if decoupled is None:
        g = grad_B(z, p)
    else:
        g = decoupled_F(z, decoupled, N)
    rep.add("gradient", _sup(g), grad_tol)
    q = orbit_from_pair(z, r, N)
    rep.add("ode residual", ode_residual(q, r, decoupled), 1e-5)
    var, jump = energy_checks(q, r, decoupled)
    rep.add("conserved quantity variation", var, 1e-6)
    e = total_energy(q, r, decoupled)
    rep.add("total energy negative", e, 0.0, passed=e < 0)
    rep.add("E2 continuity", jump, 1e-4)
    rep.add("q1 above q2", -float(np.min(q.q1 - q.q2)), 0.0, passed=bool(np.all(q.q1 > q.q2)))
    for k, v in symmetry_check(z).items():
        rep.add(f"symmetry {k}", v, 1e-7)
    corr = correspondence_check(z, p, grad_tol, decoupled)
    rep.add("topology", 0.0 if corr["topology"] == "ok" else 1.0, 0.0, passed=corr["topology"] == "ok")
    if "branches" in corr:
        rep.add("sign branches critical", corr["branches"] - corr["branches_critical"], 0.0)
    if decoupled is None or decoupled == 1.0:
        rep.add("legendre", legendre_check(z, p), 1e-7)
    rep.summary = {"qbar1": q.qbar1, "qbar2": q.qbar2, "energy": e, "period": q.period,
                   "r": r if decoupled is None else decoupled}
    return rep
