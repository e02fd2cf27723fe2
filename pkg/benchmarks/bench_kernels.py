"""Compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-repeat time per call for each kernel and the speedup,
plus one end-to-end evaluation of the interaction functional per backend.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from frozenplanet import _pykernels as py

try:
    from frozenplanet import _ckernels as ck
except ImportError:
    ck = None


def cases(n):
    rng = np.random.default_rng(0)
    K = n // 2
    k = np.arange(K + 1)
    a = (rng.standard_normal(K + 1) + 1j * rng.standard_normal(K + 1)) / (1.0 + k) ** 3
    a[0] = 0.0
    a *= 0.5 / np.sum(np.pi * k * np.abs(a))
    x = np.sort(rng.uniform(0, 2, 4 * n))
    w = rng.standard_normal(4 * n) + 1j * rng.standard_normal(4 * n)
    return {
        "series_eval": lambda m: m.series_eval(a, x),
        "invert_shift": lambda m: m.invert_shift(a, x, x - 1.0, x + 1.0, x.copy()),
        "exp_sums": lambda m: m.exp_sums(x, w, 4 * K),
    }


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


_PIPELINE = """
import time, numpy as np
from frozenplanet import LoopGrid, ZLoop, ZPair, SymmetryClass as S, grad_I
g = LoopGrid({n}); t = np.asarray(g.tau)
def pair():
    # a fresh pair each call: ZPair caches the interaction
    return ZPair(ZLoop(g, 1.6 + 0.1*np.cos(2*np.pi*t), S.SYMMETRIC_PERIODIC1),
                 ZLoop(g, 0.8*np.sin(np.pi*t) + 0.05*np.sin(3*np.pi*t), S.SYMMETRIC_ANTIPERIODIC))
grad_I(pair())
t0 = time.perf_counter()
for _ in range(3):
    grad_I(pair())
print((time.perf_counter() - t0) / 3)
"""


def pipeline(n, pure):
    env = dict(os.environ, FROZENPLANET_PURE_PYTHON="1" if pure else "")
    out = subprocess.run([sys.executable, "-c", _PIPELINE.format(n=n)], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", default="128,512")
    args = ap.parse_args()
    if ck is None:
        print("compiled kernels not built; only the numpy fallback is available")
        return
    print(f"{'kernel':<14}{'n':>6}{'cython [ms]':>14}{'numpy [ms]':>14}{'speedup':>10}")
    for n in (int(s) for s in args.sizes.split(",")):
        for name, fn in cases(n).items():
            tc = best(lambda: fn(ck), args.repeat)
            tp = best(lambda: fn(py), args.repeat)
            print(f"{name:<14}{n:>6}{1e3 * tc:>14.3f}{1e3 * tp:>14.3f}{tp / tc:>10.1f}")
    for n in (int(s) for s in args.sizes.split(",")):
        tc, tp = pipeline(n, False), pipeline(n, True)
        print(f"{'grad_I':<14}{n:>6}{1e3 * tc:>14.3f}{1e3 * tp:>14.3f}{tp / tc:>10.1f}")


if __name__ == "__main__":
    main()
