from __future__ import annotations

import numpy as np
import pytest

from primapprox import partitions as parts, psi as P, solver as S
from primapprox.errors import BudgetExceeded, ValidationError
from primapprox.measure import substream

import oracles
from test_partitions import random_partition


def inst(theta, psi, Q=None, y=0.0, phi=None, m=1, n=1, pi=None):
    return S.ProblemInstance(m, n, np.array(theta, dtype=float).reshape(n, m), np.full(n, y)
                             if np.isscalar(y) else y, psi, pi or parts.trivial(m, n), phi=phi)


def pairs_of(recs):
    return {r.q + r.p for r in recs}


def test_enumerate_examples():
    c = P.constant(0.4)
    assert pairs_of(S.enumerate_solutions(inst(0.0, c), 5)) == {(1, 0), (-1, 0)}
    i = inst(0.5, c)
    assert pairs_of(S.enumerate_solutions(i, 10)) == {(2, -1), (-2, 1)}
    un = S.enumerate_solutions(i, 10, constrained=False)
    assert pairs_of(un) == {(q, -q // 2) for q in range(-10, 11) if q and q % 2 == 0}
    assert len(un) == 10


def test_enumeration_order_and_records():
    i = inst([[0.31, -0.17]], P.power(0.6, 0.5), m=2, y=0.05)
    recs = S.enumerate_solutions(i, 25, constrained=False)
    keys = [(r.shell, r.q, r.p) for r in recs]
    assert keys == sorted(keys)
    for r in recs:
        assert r.shell == max(map(abs, r.q)) and r.shell >= 1
        assert r.residual <= i.psi(r.shell)
        assert abs(i.residual(r.q, r.p) - r.residual) <= 1e-12
    cons = S.enumerate_solutions(i, 25)
    assert all(all(r.primitive) for r in cons)
    assert pairs_of(cons) == {r.q + r.p for r in recs if all(r.primitive)}


def test_affine_examples():
    c = P.constant(0.4)
    assert pairs_of(S.enumerate_affine(inst(0.0, c, phi=[[2.0]]), 3)) == {(1, 0), (-1, 0)}
    got = pairs_of(S.enumerate_affine(inst(0.0, P.constant(0.3), y=0.25, phi=[[0.5]]), 2))
    assert got == {(1, 0), (-1, 0), (1, 1), (-1, 1), (2, 1), (-2, 1)}


def test_affine_identity_matches_normalized(rng):
    for _ in range(10):
        m, n = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        i = S.sample_instance(m, n, P.power(0.5, m / n), parts.trivial(m, n), rng)
        j = S.ProblemInstance(m, n, i.theta, i.y, i.psi, i.partition, phi=np.eye(n))
        a = [(r.q, r.p, r.residual) for r in S.enumerate_solutions(i, 15, False)]
        b = [(r.q, r.p, r.residual) for r in S.enumerate_affine(j, 15, False)]
        assert a == b


def test_singular_phi_rejected():
    with pytest.raises(ValidationError, match="phi not invertible"):
        inst(0.1, P.constant(0.3), phi=[[0.0]])
    with pytest.raises(ValidationError, match="phi not invertible"):
        inst([0.1, 0.2], P.constant(0.3), m=1, n=2, y=np.zeros(2),
             phi=[[1.0, 2.0], [2.0, 4.0]])


def test_normalized_only_entry_point():
    with pytest.raises(ValidationError):
        S.enumerate_solutions(inst(0.1, P.constant(0.3), phi=[[2.0]]), 3)


def test_budget_guard():
    with pytest.raises(BudgetExceeded):
        S.enumerate_solutions(inst([0.1, 0.2, 0.3], P.constant(0.1), m=3), 200, budget=10**6)


def test_against_oracle(rng):
    for trial in range(30):
        m, n = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        pi = random_partition(rng, m, n)
        affine = trial % 3 == 0
        i = S.sample_instance(m, n, P.power(float(rng.uniform(0.2, 1)), float(rng.uniform(0, 1))),
                              pi, rng)
        if affine:
            i = S.ProblemInstance(m, n, i.theta, i.y, i.psi, pi,
                                  phi=np.eye(n) + 0.4 * rng.uniform(-1, 1, (n, n)))
        Q = 12
        ref = oracles.naive_solutions(i.theta, i.y, i.psi.values(Q), Q, None, i.phi)
        got = {r.q + r.p: r.residual for r in S.solve(i, Q, False)}
        assert got == ref
        cref = {v: r for v, r in ref.items() if oracles.gcd_ok(v, pi.components)}
        assert {r.q + r.p: r.residual for r in S.solve(i, Q, True)} == cref
        assert S.enumerate_naive(i, Q, True) == cref


def test_thread_count_invariance(rng):
    i = S.sample_instance(2, 1, P.power(0.5, 2), parts.trivial(2, 1), rng)
    base = S.enumerate_arrays(i, 80, True, threads=1)
    for t in (2, 3, 8):
        other = S.enumerate_arrays(i, 80, True, threads=t)
        assert all(np.array_equal(a, b) for a, b in zip(base, other))


def test_homogeneous_symmetry(rng):
    for _ in range(5):
        pi = random_partition(rng, 2, 2)
        i = S.sample_instance(2, 2, P.power(0.8, 0.5), pi, rng, homogeneous=True)
        sols = pairs_of(S.enumerate_solutions(i, 15))
        assert sols == {tuple(-x for x in v) for v in sols}


def test_candidates_per_q_bound(rng):
    i = S.sample_instance(1, 2, P.power(0.45, 0.0), parts.trivial(1, 2), rng)
    qs, ps, _ = S.enumerate_arrays(i, 200, False)
    _, counts = np.unique(qs[:, 0], return_counts=True)
    assert counts.max() <= 2**2


def test_growth_curve_basic():
    i = inst(1 / 3, P.power(0.5, 1), y=0.0)
    gc = S.growth_curve(i, [3, 30, 300], constrained=False)
    # q = +-1 with p = 0, and every multiple of 3 with p = -q/3
    assert gc.counts == [2 * (Q // 3) + 2 for Q in (3, 30, 300)]
    assert gc.sums == sorted(gc.sums)
    with pytest.raises(ValidationError):
        S.growth_curve(i, [10, 5])
    with pytest.raises(ValidationError):
        S.growth_curve(i, [])


def _fraction_growing(psi, Qs, samples, strict):
    hits = 0
    for s in range(samples):
        i = S.sample_instance(1, 1, psi, parts.trivial(1, 1), substream(11, s), homogeneous=True)
        c = S.growth_curve(i, Qs).counts
        hits += all(b > a for a, b in zip(c, c[1:])) if strict else c[-1] == c[-2]
    return hits / samples


def test_growth_curve_divergent_psi():
    frac = _fraction_growing(P.power(0.5, 1), [100, 1000, 10_000], 100, strict=True)
    assert frac >= 0.95, f"only {frac:.0%} of samples grew strictly"


def test_growth_curve_convergent_psi():
    frac = _fraction_growing(P.power(0.5, 1.5), [100, 1000, 10_000], 100, strict=False)
    assert frac >= 0.9


def test_fiber_examples():
    box = S.fiber_hypercube([[0.5]], [[1.0]], [0.25], (2, 4, 2), 0.3)
    assert box[0] == pytest.approx((-2.025, -1.725))
    b1 = S.fiber_hypercube([[0.5]], [[1.0]], [0.25], (2, 4, 2), 0.1)
    b3 = S.fiber_hypercube([[0.5]], [[1.0]], [0.25], (2, 4, 2), 0.3)
    assert (b3[0][1] - b3[0][0]) == pytest.approx(3 * (b1[0][1] - b1[0][0]))
    assert sum(b1[0]) / 2 == pytest.approx(sum(b3[0]) / 2)
    zero = S.fiber_hypercube([[0.5]], [[1.0]], [0.25], (2, 4, 2), 0.0)
    assert zero[0][0] == zero[0][1] == pytest.approx(-1.875)
    with pytest.raises(ValidationError):
        S.fiber_hypercube([[0.5]], [[1.0]], [0.25], (0, 4, 2), 0.3)


def test_fiber_membership(rng):
    # every first column drawn from the hypercube puts Theta in the strip of v
    for _ in range(50):
        m, n = int(rng.integers(2, 4)), int(rng.integers(1, 3))
        rest = rng.uniform(-0.5, 0.5, (n, m - 1))
        phi = np.eye(n) + 0.3 * rng.uniform(-1, 1, (n, n))
        y = rng.uniform(-0.5, 0.5, n)
        v = [int(x) for x in rng.integers(-6, 7, m + n)]
        v[0] = v[0] or 3
        box = S.fiber_hypercube(rest, phi, y, v, 0.2, m)
        for _ in range(5):
            xi = np.array([rng.uniform(lo, hi) for lo, hi in box])
            theta = np.column_stack([xi, rest])
            res = theta @ np.array(v[:m]) + phi @ np.array(v[m:]) - y
            assert np.abs(res).max() <= 0.2 + 1e-12


def test_presets(rng):
    f = P.power(0.4, 1)
    a = S.simultaneous_preset(2, f, rng)
    assert (a.m, a.n, a.partition.components) == (1, 2, ((1, 2, 3),)) and a.normalized
    b = S.linear_form_pairs_preset(2, f, rng)
    assert (b.m, b.n) == (3, 1) and b.partition == parts.pairs(2) and not b.normalized
