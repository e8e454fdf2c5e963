"""Exact elementary number theory used by the counting and measure code.

Everything here works on plain Python ints, but inputs are held to the signed
64-bit range so results agree with the compiled kernels.
"""
from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import BudgetExceeded, ValidationError
from ._backend import kernels

INT64_MAX = 2**63 - 1

#: default cap on the number of lattice points a single enumeration may visit
DEFAULT_BUDGET = 20_000_000


def _check_int64(*values: int) -> None:
    for v in values:
        if abs(v) > INT64_MAX:
            raise ValidationError(f"integer {v} exceeds the signed 64-bit range")


def gcd_many(values: Sequence[int]) -> int:
    """Non-negative gcd of a non-empty list; ``gcd_many([0, 0]) == 0``."""
    if len(values) == 0:
        raise ValidationError("empty gcd")
    return math.gcd(*(int(v) for v in values))


@lru_cache(maxsize=65536)
def factorize(n: int) -> tuple[tuple[int, int], ...]:
    """Prime factorization of ``n >= 1`` by trial division, as (prime, exponent) pairs."""
    if n < 1:
        raise ValidationError(f"factorize needs n >= 1, got {n}")
    _check_int64(n)
    out = []
    for p in (2, 3):
        if n % p == 0:
            e = 0
            while n % p == 0:
                n //= p
                e += 1
            out.append((p, e))
    p = 5
    step = 2
    while p * p <= n:
        if n % p == 0:
            e = 0
            while n % p == 0:
                n //= p
                e += 1
            out.append((p, e))
        p += step
        step = 6 - step
    if n > 1:
        out.append((n, 1))
    return tuple(out)


def prime_divisors(n: int) -> list[int]:
    return [p for p, _ in factorize(n)]


def divisors(n: int) -> list[int]:
    """All positive divisors of ``n`` in increasing order."""
    divs = [1]
    for p, e in factorize(n):
        divs = [d * p**k for d in divs for k in range(e + 1)]
    return sorted(divs)


def moebius(n: int) -> int:
    if n < 1:
        raise ValidationError(f"moebius needs n >= 1, got {n}")
    fac = factorize(n)
    if any(e > 1 for _, e in fac):
        return 0
    return -1 if len(fac) % 2 else 1


def euler_phi(n: int) -> int:
    if n < 1:
        raise ValidationError(f"euler_phi needs n >= 1, got {n}")
    result = n
    for p, _ in factorize(n):
        result -= result // p
    return result


@lru_cache(maxsize=65536)
def _squarefree_divisors(q: int) -> tuple[tuple[int, int], ...]:
    # (d, mu(d)) for the squarefree divisors of q; the other divisors have mu = 0
    terms = [(1, 1)]
    for p in prime_divisors(q):
        terms += [(d * p, -mu) for d, mu in terms]
    return tuple(terms)


def _as_fraction(beta) -> Fraction:
    try:
        b = Fraction(beta)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"beta must be a positive rational, got {beta!r}") from exc
    if b <= 0:
        raise ValidationError(f"beta must be positive, got {beta!r}")
    return b


def legendre_sieve_count(beta, Q: int, q: int) -> int:
    """Number of integers ``1 <= k <= beta*Q`` coprime to ``q``.

    Uses ``sum_{d | q} mu(d) * floor(beta*Q/d)`` with ``beta`` held as an exact
    rational, so the floor is computed in integer arithmetic.
    """
    b = _as_fraction(beta)
    if Q < 1 or q < 1:
        raise ValidationError(f"need Q >= 1 and q >= 1, got Q={Q}, q={q}")
    num, den = b.numerator, b.denominator
    top = num * Q
    _check_int64(top, den * q, q)
    return sum(mu * (top // (den * d)) for d, mu in _squarefree_divisors(q))


def coprime_count_brute(limit: int, q: int) -> int:
    """Direct count of ``1 <= k <= limit`` with ``gcd(k, q) == 1``."""
    return sum(1 for k in range(1, limit + 1) if math.gcd(k, q) == 1)


def coprime_prefix_table(q: int, limit: int) -> np.ndarray:
    """``table[N]`` = number of ``1 <= k <= N`` coprime to ``q``, for ``0 <= N <= limit``.

    Every integer in range is gcd-tested individually; this is the brute-force
    reference the sieve is checked against.
    """
    ks = np.arange(1, limit + 1, dtype=np.int64)
    hits = np.gcd(ks, q) == 1
    table = np.zeros(limit + 1, dtype=np.int64)
    np.cumsum(hits, out=table[1:])
    return table


def zeta_with_error(d: int, tolerance: float) -> tuple[float, float]:
    """``zeta(d)`` and a certified bound on the absolute error.

    The tail ``sum_{k > N} k^-d`` lies between the integrals of ``x^-d`` over
    ``[N+1, inf)`` and ``[N, inf)``; the midpoint is used and half the gap is
    the truncation error. ``N`` is the smallest value making that gap fit the
    tolerance, with a small allowance for rounding in the partial sum.
    """
    if d <= 1:
        raise ValidationError("divergent series")
    if not tolerance > 0:
        raise ValidationError(f"tolerance must be positive, got {tolerance}")

    def half_gap(N: int) -> float:
        return (N ** (1 - d) - (N + 1) ** (1 - d)) / (2 * (d - 1))

    N = 1
    while half_gap(N) > tolerance / 2:
        N *= 2
    lo, hi = N // 2 if N > 1 else 1, N
    while lo < hi:
        mid = (lo + hi) // 2
        if half_gap(mid) > tolerance / 2:
            lo = mid + 1
        else:
            hi = mid
    N = hi
    ks = np.arange(1, N + 1, dtype=np.float64)
    partial = math.fsum((ks ** (-d)).tolist())
    tail_hi = N ** (1 - d) / (d - 1)
    tail_lo = (N + 1) ** (1 - d) / (d - 1)
    value = partial + 0.5 * (tail_hi + tail_lo)
    # fsum is correctly rounded; each power carries <= 1 ulp of its term
    rounding = 2.0 * np.finfo(float).eps * (partial + 1.0)
    err = half_gap(N) + rounding
    return value, err


def zeta(d: int, tolerance: float = 1e-12) -> float:
    value, err = zeta_with_error(d, tolerance)
    assert err <= tolerance
    return value


def count_primitive_in_box(d: int, Q: int, budget: int = DEFAULT_BUDGET) -> int:
    """Number of ``v`` in ``{1..Q}^d`` with ``gcd(v) == 1``, by enumeration."""
    if d < 2 or Q < 1:
        raise ValidationError(f"need d >= 2 and Q >= 1, got d={d}, Q={Q}")
    if Q**d > budget:
        raise BudgetExceeded(f"{Q}^{d} points exceed the enumeration budget {budget}")
    return int(kernels.count_primitive_box(d, Q))


def totients_upto(N: int) -> np.ndarray:
    """``phi[k]`` for ``0 <= k <= N`` (``phi[0] = 0``) by a linear-time sieve."""
    phi = np.arange(N + 1, dtype=np.int64)
    for p in range(2, N + 1):
        if phi[p] == p:
            phi[p::p] -= phi[p::p] // p
    return phi


def moebius_upto(N: int) -> np.ndarray:
    mu = np.ones(N + 1, dtype=np.int64)
    mu[0] = 0
    is_comp = np.zeros(N + 1, dtype=bool)
    for p in range(2, N + 1):
        if not is_comp[p]:
            is_comp[2 * p :: p] = True
            mu[p::p] *= -1
            mu[p * p :: p * p] = 0
    return mu


def mean_phi_ratio(ell: int) -> float:
    """``(1/ell) * sum_{j <= ell} phi(j)/j``; tends to ``1/zeta(2)``."""
    phi = totients_upto(ell)
    j = np.arange(1, ell + 1, dtype=np.float64)
    return math.fsum((phi[1:] / j).tolist()) / ell


def iter_sieve_table(qs: Iterable[int], Qs: Iterable[int], betas: Iterable) -> Iterable[tuple]:
    """Yield ``(q, Q, beta, sieve, brute)`` over a grid; used by the CLI and the acceptance run."""
    qs, Qs, betas = list(qs), list(Qs), [_as_fraction(b) for b in betas]
    limit = max(int(b * max(Qs)) for b in betas)
    for q in qs:
        table = coprime_prefix_table(q, limit)
        for b in betas:
            for Q in Qs:
                sieve = legendre_sieve_count(b, Q, q)
                brute = int(table[(b.numerator * Q) // b.denominator])
                yield q, Q, b, sieve, brute
