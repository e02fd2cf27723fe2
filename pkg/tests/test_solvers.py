import math

import numpy as np
import pytest

from frozenplanet.functionals import grad_Q, mean_ode_coefficients
from frozenplanet.grid import LoopGrid, SymmetryClass, ZLoop, ZPair, second_derivative
from frozenplanet.levi_civita import kepler_energy, loop_zeros, orbit_from_pair
from frozenplanet.solvers import (
    ContinuationStalled,
    ContinuationTrace,
    SolveOptions,
    SolverError,
    _follow,
    constant_mode_derivative,
    continue_homotopy,
    decoupled_constants,
    decoupled_seed,
    hessian_spectrum,
    kepler_amplitude,
    kepler_seed,
    model_gradient,
    newton_solve,
)
from oracles import cycloid_mean_q, kepler_amplitude_root, kepler_energy_closed

S = SymmetryClass


def sup(z):
    return float(np.max(np.abs(z.values)))


def admissible(z: ZPair) -> bool:
    return bool(np.all(z.z1.values > 0)) and bool(np.all(np.abs(z.z1.values) > np.abs(z.z2.values)))


def assert_tail_contracts(history, tol):
    # once below 1e-4 each accepted step gains at least a factor 10 until round-off
    tail = [g for g in history if g < 1e-4]
    for a, b in zip(tail, tail[1:]):
        assert b <= a / 10 or b <= tol


class TestKeplerSeed:
    def test_amplitude(self, grid512):
        assert kepler_amplitude(2.0) == pytest.approx(0.860254, abs=1e-6)
        assert kepler_amplitude(2.0) == pytest.approx(kepler_amplitude_root(2.0), abs=1e-13)
        assert sup(grad_Q(kepler_seed(grid512))) <= 1e-9

    @pytest.mark.parametrize("N", [0.5, 1.0, 3.0])
    def test_other_charges(self, grid256, N):
        z = kepler_seed(grid256, N)
        assert kepler_amplitude(N) == pytest.approx(kepler_amplitude_root(N), abs=1e-13)
        assert sup(grad_Q(z, N)) <= 1e-9

    def test_class_and_symmetry(self, grid512):
        z = kepler_seed(grid512)
        assert z.cls is S.SYMMETRIC_ANTIPERIODIC
        v, n = z.values, grid512.n
        assert np.max(np.abs(v - v[(n // 2 - np.arange(n)) % n])) < 1e-15

    def test_energy(self, grid512):
        e = kepler_energy(kepler_seed(grid512), 2.0)
        assert np.max(np.abs(e - kepler_energy_closed(2.0))) <= 1e-8
        assert kepler_energy_closed(2.0) == pytest.approx(-(2 * math.pi**2) ** (1 / 3), abs=1e-14)


class TestNewton:
    def test_kepler_from_scaled_seed(self, grid512):
        rep = newton_solve(model_gradient("kepler"), kepler_seed(grid512) * 1.1)
        assert rep.converged
        assert rep.final_grad_norm <= rep.tolerance
        amp = float(rep.z.values[grid512.n // 4])
        assert abs(amp - kepler_amplitude_root(2.0)) <= 1e-8
        assert_tail_contracts(rep.history, rep.tolerance)

    def test_decoupled_closed_form(self, grid512):
        z = decoupled_seed(grid512)
        start = ZPair(z.z1 * 1.05, z.z2 * 0.95, dict(z.meta))
        rep = newton_solve(model_gradient("decoupled", 0.0), start)
        assert rep.converged
        a = cycloid_mean_q(2.0)
        zbar = math.sqrt((2 + math.sqrt(2)) * a)
        assert np.max(np.abs(rep.z.z1.values - zbar)) <= 1e-8
        assert abs(float(rep.z.z2.values[grid512.n // 4]) - kepler_amplitude(2.0)) <= 1e-8
        assert decoupled_constants(2.0)[0] == pytest.approx(a, abs=1e-12)
        assert admissible(rep.z)
        assert_tail_contracts(rep.history, rep.tolerance)

    def test_already_converged(self, grid512):
        rep = newton_solve(model_gradient("kepler"), kepler_seed(grid512))
        assert rep.converged and rep.iterations == 0
        assert rep.jacobian_evaluations == 0

    def test_converged_implies_tolerance(self, grid256, rng):
        from conftest import random_pair

        z = random_pair(grid256, rng)
        rep = newton_solve(model_gradient("av"), z)
        assert rep.converged
        assert rep.final_grad_norm <= rep.tolerance
        assert rep.tolerance >= SolveOptions().grad_tol

    def test_inadmissible_start(self, grid128):
        z = decoupled_seed(grid128)
        bad = ZPair(z.z1.with_values(np.full(128, 0.1)), z.z2, dict(z.meta))
        with pytest.raises(SolverError, match="domain exit"):
            newton_solve(model_gradient("decoupled", 0.0), bad)

    def test_rank_deficient(self, grid128):
        z = kepler_seed(grid128) * 1.1
        flat = ZLoop(grid128, np.sin(np.pi * np.asarray(grid128.tau)), S.SYMMETRIC_ANTIPERIODIC)
        with pytest.raises(SolverError, match="rank deficient"):
            newton_solve(lambda _z: flat, z)

    @pytest.mark.parametrize("field,value", [("grad_tol", 0.0), ("grad_tol", 1e-3), ("max_iter", 0),
                                             ("damping", -1.0), ("fd_step", 0.0)])
    def test_options_validated(self, field, value):
        with pytest.raises(ValueError):
            SolveOptions(**{field: value})


class TestContinuation:
    def test_zero_steps_is_seed_only(self):
        tr = continue_homotopy(0, 0, n=128)
        assert len(tr.stages) == 1
        label, r, rep = tr.stages[0]
        assert label == "seed" and r == 0.0 and rep.converged

    def test_stage_a_endpoint_solves_mean_odes(self):
        z = continue_homotopy(5, 0, n=256, coarse_n=128).final.z
        a1, b1, a2, b2 = mean_ode_coefficients(z)
        for zi, a, b in ((z.z1, a1, b1), (z.z2, a2, b2)):
            assert np.max(np.abs(second_derivative(zi).values - a * zi.values - b * zi.values**3)) <= 1e-7

    def test_stage_b_endpoint_structure(self, frozen_planet_256):
        rep = frozen_planet_256.final
        assert rep.converged
        q = orbit_from_pair(rep.z)
        assert np.all(q.q1 > q.q2)
        assert loop_zeros(rep.z.z2).size == 2  # one collision per unit of physical time
        assert q.zeros2.size == 2

    def test_every_step_admissible_and_small(self, frozen_planet_256):
        prev = None
        for label, r, rep in frozen_planet_256.stages:
            assert rep.converged
            assert admissible(rep.z)
            if prev is not None and prev[2].grid.n == rep.z.grid.n:
                dr = r - prev[1] if label == prev[0] else r
                d = max(np.max(np.abs(rep.z.z1.values - prev[2].z1.values)),
                        np.max(np.abs(rep.z.z2.values - prev[2].z2.values)))
                assert d <= 0.05 * dr
            prev = (label, r, rep.z)

    @pytest.mark.slow
    def test_endpoint_independent_of_step_size(self, frozen_planet_256):
        z0 = frozen_planet_256.final.z
        z1 = continue_homotopy(10, 20, n=256, coarse_n=128).final.z
        assert np.max(np.abs(z1.z1.values - z0.z1.values)) <= 1e-6
        assert np.max(np.abs(z1.z2.values - z0.z2.values)) <= 1e-6

    def test_stall_reports_parameter(self, grid128):
        z = decoupled_seed(grid128)
        broken = ZLoop(grid128, np.sin(np.pi * np.asarray(grid128.tau)), S.SYMMETRIC_ANTIPERIODIC)

        def make_grad(r):
            if r <= 0.5:
                return model_gradient("decoupled", r)
            return lambda _z: (z.z1.with_values(np.ones(128)), broken)

        trace = ContinuationTrace(schedule={})
        with pytest.raises(ContinuationStalled, match=r"continuation stalled at r=0\.5") as info:
            _follow(trace, "A", make_grad, z, 2, SolveOptions())
        assert info.value.trace is trace
        assert [r for _, r, _ in trace.stages] == [0.5]


class TestSpectrum:
    def test_decoupled_nondegenerate(self, grid512):
        z = newton_solve(model_gradient("decoupled", 0.0), decoupled_seed(grid512)).z
        s = hessian_spectrum(model_gradient("decoupled", 0.0), z, k=3)
        assert len(s) == 3 and s == sorted(s)
        assert s[0] >= 0.1

    def test_constant_block_sign(self, grid512):
        a, zbar = decoupled_constants(2.0)
        lam = -2 * a / (zbar**3 * (zbar**2 - a) ** 3)
        z = decoupled_seed(grid512)
        d = constant_mode_derivative(model_gradient("decoupled", 0.0), z)
        assert lam < 0 and np.sign(d) == np.sign(lam)

    def test_non_critical_point(self, grid128, rng):
        from conftest import random_pair

        s = hessian_spectrum(model_gradient("interp", 0.5), random_pair(grid128, rng), k=4)
        assert len(s) == 4 and all(np.isfinite(s))
