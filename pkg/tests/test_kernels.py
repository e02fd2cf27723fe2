import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frozenplanet import _pykernels as py

ck = pytest.importorskip("frozenplanet._ckernels")


def series(rng, K, decay=1.5):
    k = np.arange(K + 1)
    return (rng.standard_normal(K + 1) + 1j * rng.standard_normal(K + 1)) / (1.0 + k) ** decay


@given(st.integers(0, 2**32 - 1), st.integers(1, 80), st.integers(1, 300))
@settings(max_examples=30, deadline=None)
def test_series_eval_agrees(seed, K, m):
    rng = np.random.default_rng(seed)
    a = series(rng, K)
    x = rng.uniform(-2, 4, m)
    for u, v in zip(ck.series_eval(a, x), py.series_eval(a, x)):
        scale = 1.0 + np.max(np.abs(v))
        assert np.max(np.abs(u - v)) <= 1e-12 * scale * K


def test_series_eval_closed_form():
    a = np.zeros(4, dtype=complex)
    a[1] = -1j  # Re(-i e^{i pi x}) = sin(pi x)
    x = np.linspace(0, 2, 9)
    for mod in (ck, py):
        f, df, ddf = mod.series_eval(a, x)
        assert np.allclose(f, np.sin(np.pi * x), atol=1e-15)
        assert np.allclose(df, np.pi * np.cos(np.pi * x), atol=1e-14)
        assert np.allclose(ddf, -np.pi**2 * np.sin(np.pi * x), atol=1e-13)


@given(st.integers(0, 2**32 - 1), st.integers(2, 40))
@settings(max_examples=30, deadline=None)
def test_invert_shift_agrees(seed, K):
    rng = np.random.default_rng(seed)
    a = series(rng, K, decay=3.0)
    a[0] = 0.0
    # keep 1 + p' positive so x -> x + p(x) is increasing
    bound = np.sum(np.pi * np.arange(K + 1) * np.abs(a))
    a *= 0.6 / bound
    t = np.sort(rng.uniform(0, 2, 50))
    lo, hi = t - 1.0, t + 1.0
    xc = ck.invert_shift(a, t, lo, hi, t.copy())
    xp = py.invert_shift(a, t, lo, hi, t.copy())
    assert np.max(np.abs(xc - xp)) <= 1e-13
    p, _, _ = py.series_eval(a, xc)
    assert np.max(np.abs(xc + p - t)) <= 1e-13


@given(st.integers(0, 2**32 - 1), st.integers(0, 60), st.integers(1, 500))
@settings(max_examples=30, deadline=None)
def test_exp_sums_agree(seed, K, m):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 2, m)
    w = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    u, v = ck.exp_sums(x, w, K), py.exp_sums(x, w, K)
    assert u.shape == v.shape == (K + 1,)
    assert np.max(np.abs(u - v)) <= 1e-12 * (1 + np.sum(np.abs(w)))


def test_exp_sums_uniform_grid_is_fft():
    n = 64
    x = 2.0 * np.arange(n) / n
    w = np.random.default_rng(1).standard_normal(n)
    s = ck.exp_sums(x, w, n // 2)
    assert np.allclose(s, np.conj(np.fft.rfft(w)), atol=1e-12)


def test_environment_selects_fallback():
    code = "import frozenplanet; print(frozenplanet.BACKEND)"
    env = dict(os.environ, FROZENPLANET_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"
    env.pop("FROZENPLANET_PURE_PYTHON")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "cython"


def test_backends_give_same_functional():
    code = (
        "import numpy as np\n"
        "from frozenplanet import LoopGrid, ZLoop, ZPair, SymmetryClass as S, eval_I\n"
        "g = LoopGrid(128); t = np.asarray(g.tau)\n"
        "z1 = ZLoop(g, 1.6 + 0.1*np.cos(2*np.pi*t), S.SYMMETRIC_PERIODIC1)\n"
        "z2 = ZLoop(g, 0.8*np.sin(np.pi*t) + 0.05*np.sin(3*np.pi*t), S.SYMMETRIC_ANTIPERIODIC)\n"
        "print(repr(eval_I(ZPair(z1, z2))))\n"
    )
    vals = []
    for pure in ("1", ""):
        env = dict(os.environ, FROZENPLANET_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        vals.append(float(out.stdout))
    assert abs(vals[0] - vals[1]) <= 1e-13 * abs(vals[0])
