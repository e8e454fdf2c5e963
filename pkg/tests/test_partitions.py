from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from primapprox import partitions as parts
from primapprox.errors import BudgetExceeded, ValidationError

import oracles


def random_partition(rng, m, n):
    """A uniformly shuffled split of 1..m+n into blocks of size >= 2."""
    idx = list(rng.permutation(np.arange(1, m + n + 1)))
    comps = []
    while idx:
        size = len(idx) if len(idx) < 4 else int(rng.integers(2, len(idx) - 1))
        comps.append([int(i) for i in idx[:size]])
        idx = idx[size:]
    return parts.validate(m, n, comps)


@st.composite
def partitions(draw, max_dim=7):
    m = draw(st.integers(1, max_dim - 1))
    n = draw(st.integers(1, max_dim - m))
    seed = draw(st.integers(0, 2**32 - 1))
    if m + n < 2:
        n = 1
    return random_partition(np.random.default_rng(seed), m, n)


def test_validate_examples():
    p = parts.validate(1, 1, [{1, 2}])
    assert p.components == ((1, 2),)
    p = parts.validate(3, 1, [{1, 2}, {3, 4}])
    assert p == parts.pairs(2)
    with pytest.raises(ValidationError, match="fewer than 2"):
        parts.validate(1, 1, [{1}, {2}])


@pytest.mark.parametrize("comps", [[[1, 2], [2, 3]], [[1, 2]], [[1, 2, 3, 5]], [[1, 1, 2, 3]]])
def test_validate_rejects(comps):
    with pytest.raises(ValidationError):
        parts.validate(2, 1, comps)


def test_ergodicity_bound():
    assert parts.meets_ergodicity_bound(parts.trivial(1, 1))
    assert not parts.meets_ergodicity_bound(parts.validate(2, 2, [{1, 2}, {3, 4}]))
    assert parts.meets_ergodicity_bound(parts.pairs(2))


def test_is_in_P_pi_examples():
    assert parts.is_in_P_pi((2, -1), parts.trivial(1, 1))
    assert not parts.is_in_P_pi((2, 4, 3, 9), parts.validate(2, 2, [{1, 2}, {3, 4}]))
    for p in (parts.trivial(1, 2), parts.trivial(2, 1)):
        assert parts.is_in_P_pi((1, 1, 1), p)
    with pytest.raises(ValidationError):
        parts.is_in_P_pi((1, 1), parts.trivial(2, 1))


@given(partitions(), st.data())
def test_P_pi_invariances(p, data):
    v = data.draw(st.lists(st.integers(-30, 30), min_size=p.dim, max_size=p.dim))
    base = parts.is_in_P_pi(v, p)
    assert base == oracles.gcd_ok(v, p.components)
    i = data.draw(st.integers(0, p.dim - 1))
    flipped = list(v)
    flipped[i] = -flipped[i]
    assert parts.is_in_P_pi(flipped, p) == base
    npart = parts.normalize(p)
    assert parts.is_in_P_pi(npart.apply(v), npart.as_partition()) == base


def test_trivial_partition_is_full_gcd():
    p = parts.trivial(2, 2)
    rng = np.random.default_rng(3)
    for v in rng.integers(-12, 13, size=(500, 4)).tolist():
        assert parts.is_in_P_pi(v, p) == (math.gcd(*v) == 1)


def test_normalize_examples():
    n1 = parts.normalize(parts.validate(2, 2, [{1, 3}, {2, 4}]))
    assert (n1.a, n1.b, n1.k) == (2, 2, 2)
    assert n1.permutation == (1, 2, 3, 4)
    n2 = parts.normalize(parts.pairs(2))
    assert (n2.a, n2.b, n2.k) == (1, 1, 2)
    assert {1, 4} <= set(n2.renumbered[0])
    assert set(n2.renumbered[0]) == {n2.permutation[2], n2.permutation[3]}
    n3 = parts.normalize(parts.validate(2, 2, [{1, 2}, {3, 4}]))
    assert (n3.a, n3.b, n3.k) == (0, 1, 2)
    assert n3.renumbered[0] == (3, 4)


@given(partitions())
def test_normalize_invariants(p):
    npart = parts.normalize(p)
    m, n = p.m, p.n
    assert 0 <= npart.a <= min(npart.k, m, n) and npart.a <= npart.b <= npart.k
    assert sorted(npart.permutation[:m]) == list(range(1, m + 1))
    assert sorted(npart.permutation[m:]) == list(range(m + 1, m + n + 1))
    for j, comp in enumerate(npart.renumbered, start=1):
        if j <= npart.a:
            assert j in comp and m + j in comp
        elif j <= npart.b:
            assert all(i > m for i in comp)
        else:
            assert all(i <= m for i in comp)


@given(partitions())
def test_partition_text_round_trip(p):
    text = parts.format_partition(p)
    assert parts.parse_partition(text) == p


def test_parse_partition_example():
    p = parts.parse_partition("m=3 n=1 pi={1,2}/{3,4}")
    assert p == parts.pairs(2)
    assert str(p) == "m=3 n=1 pi={1,2}/{3,4}"
    for bad in ("m=3 n=1", "m=3 n=1 pi={1,2}/{3}", "m=x n=1 pi={1,2}", "pi={1,2"):
        with pytest.raises(ValidationError):
            parts.parse_partition(bad)


def test_count_admissible_examples():
    npart = parts.normalize(parts.trivial(1, 1))
    assert parts.count_admissible_p([6], 1, npart) == 2
    assert parts.count_admissible_p([1], 1, npart) == 1
    assert parts.count_admissible_p([4], 1, parts.normalize(parts.trivial(1, 2))) == 12


def _brute_admissible(q, beta, npart):
    bound = math.floor(beta * max(q))
    n = npart.base.n
    p = npart.as_partition()
    count = 0
    for ps in np.ndindex(*(bound,) * n):
        v = list(q) + [x + 1 for x in ps]
        count += parts.is_in_P_pi(v, p)
    return count


def test_count_admissible_against_brute_force(rng):
    for _ in range(40):
        m, n = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        npart = parts.normalize(random_partition(rng, m, n))
        q = [int(x) for x in rng.integers(1, 9, size=m)]
        beta = float(rng.choice([0.5, 1.0, 1.5]))
        try:
            got = parts.count_admissible_p(q, beta, npart)
        except ValidationError:
            assert any(math.gcd(*(q[i - 1] for i in c)) != 1 for c in npart.renumbered[npart.b:])
            continue
        assert got == _brute_admissible(q, beta, npart)


def test_count_admissible_errors():
    npart = parts.normalize(parts.validate(2, 2, [{1, 2}, {3, 4}]))
    with pytest.raises(ValidationError, match="q not admissible"):
        parts.count_admissible_p([2, 4], 1, npart)
    with pytest.raises(BudgetExceeded):
        parts.count_admissible_p([3000, 1], 1, npart, budget=1000)


def test_admissible_count_lower_bound_empirical(rng):
    # the lower bound (1 - eps) beta^n |q|^n prod phi(q_j)/q_j with eps = 0.1
    npart = parts.normalize(parts.validate(2, 2, [{1, 3}, {2, 4}]))
    assert (npart.a, npart.b) == (2, 2)
    checked = 0
    while checked < 50:
        q = [int(x) for x in rng.integers(1, 401, size=2)]
        if max(q) < 100:
            continue
        got = parts.count_admissible_p(q, 1 / 6, npart)
        bound = parts.admissible_lower_bound(q, 1 / 6, npart)
        assert got >= 0.9 * bound, (q, got, bound)
        checked += 1
