import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frozenplanet.grid import (
    LoopGrid,
    SymmetryClass,
    ZLoop,
    ZPair,
    derivative,
    dnorm2,
    drop_nyquist,
    inner,
    norm2,
    project_symmetry,
    resample,
    reverse,
    second_derivative,
    shift,
)

S = SymmetryClass


def loop(grid, f, cls=S.PLAIN):
    return ZLoop.from_function(grid, f, cls)


def band_limited(grid, coeffs):
    """Real loop from a list of (a_k, b_k) pairs for modes k = 0..len-1."""
    tau = np.asarray(grid.tau)
    v = np.zeros(grid.n)
    for k, (a, b) in enumerate(coeffs):
        v += a * np.cos(np.pi * k * tau) + b * np.sin(np.pi * k * tau)
    return ZLoop(grid, v)


coeff_lists = st.lists(
    st.tuples(st.floats(-1, 1, allow_nan=False), st.floats(-1, 1, allow_nan=False)), min_size=1, max_size=12
)


class TestLoopGrid:
    def test_spacing_times_size_is_period(self):
        for n in (16, 64, 512):
            g = LoopGrid(n)
            assert g.h * n == 2.0
            assert g.tau[n // 4] == 0.5 and g.tau[n // 2] == 1.0

    @pytest.mark.parametrize("n", [12, 18, 30, 0])
    def test_rejects_bad_sizes(self, n):
        with pytest.raises(ValueError):
            LoopGrid(n)

    def test_loop_length_checked(self):
        with pytest.raises(ValueError):
            ZLoop(LoopGrid(16), np.zeros(17))

    def test_values_are_read_only(self):
        z = ZLoop(LoopGrid(16), np.ones(16))
        with pytest.raises(ValueError):
            z.values[0] = 2.0


class TestInner:
    def test_constant(self, grid128):
        one = loop(grid128, lambda t: np.ones_like(t), S.PERIODIC1)
        assert inner(one, one) == pytest.approx(1.0, abs=1e-15)

    def test_sine_square(self, grid128):
        s = loop(grid128, lambda t: np.sin(np.pi * t), S.ANTIPERIODIC)
        assert inner(s, s) == pytest.approx(0.5, abs=1e-15)

    def test_sine_cosine_orthogonal(self, grid128):
        s = loop(grid128, lambda t: np.sin(np.pi * t))
        c = loop(grid128, lambda t: np.cos(np.pi * t))
        assert abs(inner(s, c)) < 1e-15

    def test_grid_mismatch(self):
        with pytest.raises(ValueError, match="incompatible grids"):
            inner(ZLoop(LoopGrid(16), np.ones(16)), ZLoop(LoopGrid(32), np.ones(32)))

    def test_mode_products_exact(self, grid128):
        # int_0^1 cos(pi j t) cos(pi k t) over the doubled period is delta_jk/2 (1 for j=k=0)
        for j in range(0, 20, 3):
            for k in range(0, 20, 4):
                u = loop(grid128, lambda t: np.cos(np.pi * j * t))
                v = loop(grid128, lambda t: np.cos(np.pi * k * t))
                want = 0.0 if j != k else (1.0 if j == 0 else 0.5)
                assert abs(inner(u, v) - want) < 1e-12

    @given(coeff_lists, coeff_lists, st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=40, deadline=None)
    def test_bilinear_symmetric(self, cu, cv, a, b):
        g = LoopGrid(64)
        u, v = band_limited(g, cu), band_limited(g, cv)
        w = band_limited(g, cv[::-1])
        assert inner(u, v) == pytest.approx(inner(v, u), abs=1e-13)
        lhs = inner(u * a + v * b, w)
        assert lhs == pytest.approx(a * inner(u, w) + b * inner(v, w), abs=1e-12)

    @given(coeff_lists)
    @settings(max_examples=40, deadline=None)
    def test_positive_definite(self, cu):
        u = band_limited(LoopGrid(64), cu)
        # below ~1e-154 the squares underflow, so positivity is only asserted above that
        if np.max(np.abs(u.values)) > 1e-150:
            assert norm2(u) > 0


class TestDerivative:
    def test_constant(self, grid128):
        assert np.max(np.abs(derivative(ZLoop(grid128, np.full(128, 3.0))).values)) < 1e-14

    @pytest.mark.parametrize("k", [1, 3])
    def test_sines(self, grid128, k):
        z = loop(grid128, lambda t: np.sin(k * np.pi * t), S.ANTIPERIODIC)
        want = k * np.pi * np.cos(k * np.pi * np.asarray(grid128.tau))
        assert np.max(np.abs(derivative(z).values - want)) <= 1e-10

    def test_second_derivative_matches_twice(self, grid128):
        z = loop(grid128, lambda t: np.sin(np.pi * t) + 0.3 * np.cos(4 * np.pi * t))
        twice = derivative(derivative(z)).values
        assert np.max(np.abs(second_derivative(z).values - twice)) < 1e-9

    def test_dnorm2_is_norm_of_derivative(self, grid128):
        z = loop(grid128, lambda t: np.sin(np.pi * t) + 0.3 * np.cos(4 * np.pi * t))
        assert dnorm2(z) == pytest.approx(norm2(derivative(z)), rel=1e-12)
        assert dnorm2(z) == pytest.approx(-inner(second_derivative(z), z), rel=1e-12)

    def test_class_mapping(self, grid128):
        z = loop(grid128, lambda t: np.sin(np.pi * t), S.SYMMETRIC_ANTIPERIODIC)
        assert derivative(z).cls is S.ANTIPERIODIC
        # a symmetric loop has a derivative odd about 1/2
        d = derivative(z).values
        assert np.max(np.abs(d + d[(grid128.n // 2 - np.arange(grid128.n)) % grid128.n])) < 1e-12

    @given(coeff_lists, coeff_lists)
    @settings(max_examples=40, deadline=None)
    def test_integration_by_parts(self, cu, cv):
        g = LoopGrid(64)
        u, v = band_limited(g, cu), band_limited(g, cv)
        assert abs(inner(derivative(u), v) + inner(u, derivative(v))) <= 1e-10


class TestSymmetry:
    def test_symmetric_unchanged(self, grid128):
        z = loop(grid128, lambda t: np.sin(np.pi * t), S.SYMMETRIC_ANTIPERIODIC)
        assert np.max(np.abs(project_symmetry(z, S.SYMMETRIC_ANTIPERIODIC).values - z.values)) < 1e-15

    def test_antisymmetric_kernel(self, grid128):
        z = loop(grid128, lambda t: np.sin(2 * np.pi * t), S.PERIODIC1)
        assert np.max(np.abs(project_symmetry(z, S.SYMMETRIC_PERIODIC1).values)) < 1e-15

    def test_cosine_kept(self, grid128):
        z = loop(grid128, lambda t: np.cos(2 * np.pi * t), S.PERIODIC1)
        assert np.max(np.abs(project_symmetry(z, S.SYMMETRIC_PERIODIC1).values - z.values)) < 1e-15

    @given(coeff_lists, st.sampled_from(list(SymmetryClass)))
    @settings(max_examples=50, deadline=None)
    def test_idempotent(self, cu, cls):
        z = band_limited(LoopGrid(64), cu)
        once = project_symmetry(z, cls)
        assert np.array_equal(project_symmetry(once, cls).values, once.values)

    @given(coeff_lists, coeff_lists, st.sampled_from(list(SymmetryClass)))
    @settings(max_examples=40, deadline=None)
    def test_orthogonal(self, cu, cv, cls):
        g = LoopGrid(64)
        u, v = band_limited(g, cu), band_limited(g, cv)
        pu = project_symmetry(u, cls)
        assert abs(inner(u - pu, project_symmetry(v, cls))) < 1e-12

    def test_class_relations_hold(self, grid128, rng):
        z = ZLoop(grid128, rng.standard_normal(128))
        n = grid128.n
        p = project_symmetry(z, S.SYMMETRIC_ANTIPERIODIC).values
        assert np.max(np.abs(p[(np.arange(n) + n // 2) % n] + p)) < 1e-15
        assert np.max(np.abs(p[(n // 2 - np.arange(n)) % n] - p)) < 1e-15


class TestResampling:
    def test_shift_and_reverse(self, grid128):
        z = loop(grid128, lambda t: np.sin(np.pi * t) + 0.2 * np.cos(2 * np.pi * t))
        tau = np.asarray(grid128.tau)
        m = 7
        want = np.sin(np.pi * (tau + m * grid128.h)) + 0.2 * np.cos(2 * np.pi * (tau + m * grid128.h))
        assert np.max(np.abs(shift(z, m).values - want)) < 1e-14
        assert np.max(np.abs(reverse(z).values - (-np.sin(np.pi * tau) + 0.2 * np.cos(2 * np.pi * tau)))) < 1e-14

    def test_resample_exact_for_band_limited(self):
        f = lambda t: np.sin(np.pi * t) + 0.3 * np.cos(5 * np.pi * t)  # noqa: E731
        z = loop(LoopGrid(64), f, S.ANTIPERIODIC)
        up = resample(z, 256)
        assert up.cls is S.ANTIPERIODIC
        assert np.max(np.abs(up.values - f(np.asarray(up.grid.tau)))) < 1e-13
        assert np.max(np.abs(resample(up, 64).values - z.values)) < 1e-13

    def test_off_grid_evaluation(self, grid128):
        f = lambda t: np.sin(np.pi * t) + 0.3 * np.cos(5 * np.pi * t)  # noqa: E731
        z = loop(grid128, f)
        x = np.linspace(0.0, 2.0, 37)
        v, dv, ddv = z.eval_with_derivatives(x)
        assert np.max(np.abs(v - f(x))) < 1e-13
        assert np.max(np.abs(dv - (np.pi * np.cos(np.pi * x) - 1.5 * np.pi * np.sin(5 * np.pi * x)))) < 1e-11
        assert np.max(np.abs(ddv - (-np.pi**2 * np.sin(np.pi * x) - 7.5 * np.pi**2 * np.cos(5 * np.pi * x)))) < 1e-9

    def test_drop_nyquist(self, grid128):
        alt = ZLoop(grid128, (-1.0) ** np.arange(128))
        assert np.max(np.abs(drop_nyquist(alt).values)) < 1e-15
        s = loop(grid128, lambda t: np.sin(np.pi * t))
        assert np.max(np.abs(drop_nyquist(s).values - s.values)) < 1e-15


def test_pair_requires_common_grid():
    with pytest.raises(ValueError):
        ZPair(ZLoop(LoopGrid(16), np.ones(16)), ZLoop(LoopGrid(32), np.ones(32)))
