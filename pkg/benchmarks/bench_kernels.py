"""Time the compiled kernels against the numpy fallback on identical inputs.

    python benchmarks/bench_kernels.py [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from primapprox import _pykernels
from primapprox import partitions as parts
from primapprox import psi as psimod
from primapprox._pykernels import shell_box

try:
    from primapprox import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def cases():
    rng = np.random.default_rng(1)
    yield "count_primitive_box d=2 Q=2000", lambda k: k.count_primitive_box(2, 2000)
    yield "count_primitive_box d=3 Q=150", lambda k: k.count_primitive_box(3, 150)

    for m, n, Q in [(1, 2, 3000), (2, 1, 300), (2, 2, 60), (3, 1, 30)]:
        theta = rng.uniform(-0.5, 0.5, (n, m))
        y = rng.uniform(-0.5, 0.5, n)
        psi = psimod.power(0.5, m / n).values(Q)
        comp = parts.trivial(m, n).component_ids()
        yield (f"enumerate_shells m={m} n={n} Q={Q}",
               lambda k, a=(theta, y, psi, Q, comp): k.enumerate_shells(
                   a[0], None, None, a[1], a[2], 1, a[3] + 1, a[4], 1, True))

    S, Q = 4000, 12
    thetas = rng.uniform(-0.5, 0.5, (S, 1, 2))
    qs = shell_box(1, Q + 1, 2)
    shell_q = np.abs(qs).max(axis=1)
    psi_q = psimod.power(0.4, 1).values(Q)[shell_q]
    comp = parts.trivial(2, 1).component_ids()
    for constrained in (True, False):
        yield (f"strip_hit_counts S={S} Q={Q} {'E' if constrained else 'F'}",
               lambda k, c=constrained: k.strip_hit_counts(
                   thetas, qs, psi_q, shell_q, np.array([0.1]), comp, 1, c, Q + 1))


def same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
    print(f"{'case':45s} {'python':>10s} {'cython':>10s} {'speedup':>8s}  equal")
    for name, fn in cases():
        tp, outp = best_of(lambda: fn(_pykernels), args.repeat)
        if _kernels is None:
            print(f"{name:45s} {tp:10.4f}")
            continue
        tc, outc = best_of(lambda: fn(_kernels), args.repeat)
        print(f"{name:45s} {tp:10.4f} {tc:10.4f} {tp / tc:8.1f}x  {same(outp, outc)}")


if __name__ == "__main__":
    main()
