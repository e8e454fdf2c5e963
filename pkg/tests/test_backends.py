"""The compiled kernels and the numpy fallback must agree bit for bit."""
from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from primapprox import _pykernels, partitions as parts, psi as P

from test_partitions import random_partition

ck = pytest.importorskip("primapprox._kernels")


def test_count_primitive_box():
    for d, Q in ((2, 1), (2, 57), (3, 20), (4, 6)):
        assert ck.count_primitive_box(d, Q) == _pykernels.count_primitive_box(d, Q)


def test_enumerate_shells_bit_identical(rng):
    for trial in range(60):
        m, n = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        pi = random_partition(rng, m, n)
        theta = rng.uniform(-0.5, 0.5, (n, m))
        y = rng.uniform(-0.5, 0.5, n)
        phi = phi_inv = None
        if trial % 2:
            phi = np.eye(n) + 0.5 * rng.uniform(-1, 1, (n, n))
            phi_inv = np.ascontiguousarray(np.linalg.inv(phi))
        Q = 9 if m == 3 else 20
        psi = P.power(float(rng.uniform(0.2, 1.2)), float(rng.uniform(0, 1))).values(Q)
        for constrained in (True, False):
            args = (theta, phi, phi_inv, y, psi, 1, Q + 1, pi.component_ids(), pi.k, constrained)
            a, b = ck.enumerate_shells(*args), _pykernels.enumerate_shells(*args)
            for x, z in zip(a, b):
                assert x.dtype == z.dtype and np.array_equal(x, z)


def test_strip_hit_counts_bit_identical(rng):
    for _ in range(12):
        m, n = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        pi = random_partition(rng, m, n)
        Q = 6
        qs = _pykernels.shell_box(1, Q + 1, m)
        shell_q = np.abs(qs).max(axis=1)
        psi_q = P.power(float(rng.uniform(0.1, 0.9)), 1).values(Q)[shell_q]
        th = rng.uniform(-0.5, 0.5, (400, n, m))
        y = rng.uniform(-0.5, 0.5, n)
        for constrained in (True, False):
            args = (th, qs, psi_q, shell_q, y, pi.component_ids(), pi.k, constrained, Q + 1)
            assert np.array_equal(ck.strip_hit_counts(*args), _pykernels.strip_hit_counts(*args))


def test_fallback_selected_by_environment():
    env = dict(os.environ, PRIMAPPROX_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "import primapprox; print(primapprox.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    import primapprox
    assert primapprox.BACKEND == "cython"
