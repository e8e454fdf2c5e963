from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from primapprox import group as G, partitions as parts, psi as P
from primapprox.errors import BudgetExceeded, ValidationError

import oracles
from test_partitions import partitions, random_partition

SMALL = [parts.trivial(1, 1), parts.trivial(1, 2), parts.trivial(2, 1)]


def test_generators_m1_n1():
    gens = G.generators(parts.trivial(1, 1))
    mats = {g.matrix for g in gens}
    assert mats == {((1, 1), (0, 1)), ((1, -1), (0, 1)), ((1, 0), (1, 1)), ((1, 0), (-1, 1))}


@given(partitions())
def test_generator_count_and_det(p):
    gens = G.generators(p)
    assert len(gens) == sum(2 * len(c) * (len(c) - 1) for c in p.components)
    for g in gens:
        assert G.det(g.matrix) == 1
        (r, s) = g.factorization[0].r, g.factorization[0].s
        comp = next(c for c in p.components if r in c)
        assert s in comp
        for i in range(1, p.dim + 1):
            if i not in comp:
                e = tuple(int(j == i) for j in range(1, p.dim + 1))
                assert g(e) == e


def test_orbit_ball_example():
    ball = G.orbit_ball(parts.trivial(1, 1), 1, 100)
    assert ball.complete
    assert ball.vectors == {(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)}
    assert G.generators(parts.trivial(1, 1))[0]((1, 1)) == (2, 1)


def test_orbit_ball_budget_reported():
    ball = G.orbit_ball(parts.trivial(2, 1), 3, 2)
    assert not ball.complete and ball.depth == 2
    assert all(parts.is_in_P_pi(v, parts.trivial(2, 1)) for v in ball.vectors)
    with pytest.raises(ValidationError):
        G.orbit_ball(parts.trivial(1, 1), 0, 10)


def test_orbit_ball_larger_partitions():
    for p in (parts.pairs(2), parts.validate(2, 2, [{1, 3}, {2, 4}])):
        ball = G.orbit_ball(p, 2, 10**4)
        assert ball.complete and ball.vectors == G.primitive_ball(p, 2)


def test_reduce_examples():
    assert G.reduce_to_base((1, 1), parts.trivial(1, 1)) == ()
    w = G.reduce_to_base((2, 1), parts.trivial(1, 1))
    assert w == (G.Letter(1, 2, 1),)
    with pytest.raises(ValidationError):
        G.reduce_to_base((2, 4), parts.trivial(1, 1))


def _verify(word, v, d):
    mat = [[int(i == j) for j in range(d)] for i in range(d)]
    for w in word:
        e = [[int(i == j) for j in range(d)] for i in range(d)]
        e[w.r - 1][w.s - 1] += w.e
        mat = oracles.mat_mul_int(mat, e)
    return tuple(sum(row) for row in mat) == tuple(v)


@given(partitions(max_dim=6), st.data())
@settings(max_examples=60)
def test_reduce_round_trip_random(p, data):
    v = data.draw(st.lists(st.integers(-10**6, 10**6), min_size=p.dim, max_size=p.dim))
    if not parts.is_in_P_pi(v, p):
        with pytest.raises(ValidationError):
            G.reduce_to_base(v, p)
        return
    word = G.reduce_to_base(v, p)
    assert _verify(word, v, p.dim)


def test_word_serialization(rng):
    p = random_partition(rng, 2, 2)
    words = [G.reduce_to_base(v, p) for v in sorted(G.primitive_ball(p, 2))[:40]]
    assert G.parse_words(G.format_words(words)) == words
    vecs = sorted(G.primitive_ball(p, 1))
    assert G.parse_vectors(G.format_vectors(vecs)) == vecs
    assert G.parse_word("1") == ()
    with pytest.raises(ValidationError):
        G.parse_letter("E1,1")


def test_inverse_and_products(rng):
    p = parts.trivial(2, 2)
    for _ in range(20):
        g = G.random_element(p, 6, rng)
        h = G.random_element(p, 6, rng)
        assert G.det((g @ h).matrix) == 1
        ident = G.identity(4)
        assert (g @ g.inverse()).matrix == ident
        assert G.integer_inverse(g.matrix) == g.inverse().matrix
        assert G.GroupElement.from_matrix(g.matrix).inverse().matrix == g.inverse().matrix
    with pytest.raises(ValidationError):
        G.GroupElement.from_matrix([[2, 0], [0, 1]])


def test_act_right(rng):
    p = parts.trivial(2, 1)
    X = rng.uniform(-1, 1, (1, 3))
    assert np.array_equal(G.act_right(X, G.GroupElement(G.identity(3))), X)
    for _ in range(30):
        g = G.random_element(p, 5, rng)
        v = tuple(int(x) for x in rng.integers(-20, 21, 3))
        Xi = G.act_right(X, g, inverse=True)
        assert np.allclose(Xi @ np.array(g(v), float), X @ np.array(v, float), atol=1e-10)
        back = G.act_right(Xi, g)
        assert np.abs(back - X).max() <= 1e-10
        exact = G.act_right_exact(X, g, inverse=True)
        lhs = [sum(a * b for a, b in zip(row, g(v))) for row in exact]
        rhs = [sum(Fraction(a) * b for a, b in zip(row, v)) for row in X.tolist()]
        assert lhs == rhs


def test_transport_identity_example():
    g = G.GroupElement.from_matrix([[1, 0], [1, 1]])
    rec = G.transport_solution([[0.3]], [[1.0]], [0.0], (2,), (-1,), g)
    assert rec.exact_identity and rec.residual_after == pytest.approx(rec.residual_before, abs=1e-15)
    assert (rec.q, rec.p) == ((2,), (1,))
    ident = G.GroupElement(G.identity(2))
    rec = G.transport_solution([[0.3]], [[1.0]], [0.0], (2,), (-1,), ident)
    assert (rec.q, rec.p) == ((2,), (-1,)) and rec.norm_chain and rec.exact_identity


def test_transport_threshold_and_bound():
    g = G.GroupElement.from_matrix([[1, 1], [0, 1]])
    f = P.power(0.5, 1)
    a = G.minimal_a([[0.3]], [[1.0]], g)
    assert a > 2 * 1 * G.largeness_constant([[0.3]], [[1.0]])
    # (q, p) = (10, -3): residual 0, so the inequality holds for any psi
    rec = G.transport_solution([[0.3]], [[1.0]], [0.0], (10,), (-3,), g, l=1, a=a, psi=f)
    assert rec.above_threshold and rec.bound_holds and not rec.flags
    rec = G.transport_solution([[0.3]], [[1.0]], [0.0], (1,), (5,), g, l=1, a=a)
    assert "below largeness threshold" in rec.flags
    rec = G.transport_solution([[0.3]], [[1.0]], [0.0], (10,), (-3,), g, l=1, a=1)
    assert any(fl.startswith("a not above") for fl in rec.flags)
    with pytest.raises(ValidationError):
        G.transport_solution([[0.3]], [[1.0]], [0.0], (10,), (2,), g, a=a, psi=f)


def test_transport_zero_q_flag():
    g = G.GroupElement.from_matrix([[1, -1], [0, 1]])
    rec = G.transport_solution([[0.05]], [[1.0]], [0.0], (3,), (3,), g, a=100)
    assert rec.q == (0,)
    assert "transported q is zero" in rec.flags or "below largeness threshold" in rec.flags


def test_entry_limit():
    d = 2
    word = tuple(G.Letter(1, 2, 2**40) if i % 2 == 0 else G.Letter(2, 1, 2**40) for i in range(4))
    with pytest.raises(BudgetExceeded):
        G.GroupElement.from_word(word, d)
