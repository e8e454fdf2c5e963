"""Partitions of the coordinate set {1, ..., m+n} and the primitivity predicate.

A vector ``v`` belongs to ``P(pi)`` when, for every component, the gcd of the
coordinates indexed by that component is 1. Indices are 1-based throughout the
public API, matching the text form ``m=3 n=1 pi={1,2}/{3,4}``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .arith import DEFAULT_BUDGET, euler_phi, gcd_many, zeta
from .errors import BudgetExceeded, ValidationError


@dataclass(frozen=True)
class Partition:
    m: int
    n: int
    components: tuple[tuple[int, ...], ...]

    @property
    def dim(self) -> int:
        return self.m + self.n

    @property
    def k(self) -> int:
        return len(self.components)

    def component_ids(self) -> np.ndarray:
        """0-based component id of each 0-based coordinate."""
        ids = np.empty(self.dim, dtype=np.int64)
        for c, comp in enumerate(self.components):
            for i in comp:
                ids[i - 1] = c
        return ids

    def __str__(self) -> str:
        return format_partition(self)


def validate(m: int, n: int, components) -> Partition:
    """Build a :class:`Partition`, raising :class:`ValidationError` on any defect."""
    if m < 1 or n < 1:
        raise ValidationError(f"m and n must be positive, got m={m}, n={n}")
    comps = []
    seen: set[int] = set()
    for comp in components:
        c = sorted(int(i) for i in comp)
        if len(set(c)) != len(c):
            raise ValidationError(f"component {c} repeats an index")
        if len(c) < 2:
            raise ValidationError(f"component {c} has fewer than 2 elements")
        bad = [i for i in c if not 1 <= i <= m + n]
        if bad:
            raise ValidationError(f"indices {bad} outside 1..{m + n}")
        overlap = seen.intersection(c)
        if overlap:
            raise ValidationError(f"indices {sorted(overlap)} appear in more than one component")
        seen.update(c)
        comps.append(tuple(c))
    missing = sorted(set(range(1, m + n + 1)) - seen)
    if missing:
        raise ValidationError(f"indices {missing} are not covered by any component")
    comps.sort(key=lambda c: c[0])
    return Partition(m, n, tuple(comps))


def trivial(m: int, n: int) -> Partition:
    return validate(m, n, [range(1, m + n + 1)])


def pairs(k: int) -> Partition:
    """``{1,2}/{3,4}/.../{2k-1,2k}`` with ``m = 2k-1``, ``n = 1``."""
    return validate(2 * k - 1, 1, [(2 * j - 1, 2 * j) for j in range(1, k + 1)])


def meets_ergodicity_bound(p: Partition) -> bool:
    """True iff every component has at least ``n+1`` elements."""
    return all(len(c) >= p.n + 1 for c in p.components)


def component_gcds(v: Sequence[int], p: Partition) -> tuple[int, ...]:
    if len(v) != p.dim:
        raise ValidationError(f"vector of length {len(v)} does not match m+n={p.dim}")
    return tuple(gcd_many([v[i - 1] for i in comp]) for comp in p.components)


def is_in_P_pi(v: Sequence[int], p: Partition) -> bool:
    return all(g == 1 for g in component_gcds(v, p))


# --- text form ---------------------------------------------------------------

_PI_RE = re.compile(r"\{([^{}]*)\}")


def parse_components(text: str) -> list[list[int]]:
    text = text.strip()
    if not text:
        raise ValidationError("empty partition")
    comps = []
    for chunk in text.split("/"):
        mt = _PI_RE.fullmatch(chunk.strip())
        if mt is None:
            raise ValidationError(f"cannot parse partition component {chunk!r}")
        try:
            comps.append([int(x) for x in mt.group(1).split(",") if x.strip()])
        except ValueError as exc:
            raise ValidationError(f"non-integer index in {chunk!r}") from exc
    return comps


def format_components(p: Partition) -> str:
    return "/".join("{" + ",".join(map(str, c)) + "}" for c in p.components)


def parse_partition(text: str) -> Partition:
    """Parse ``m=3 n=1 pi={1,2}/{3,4}``."""
    fields = {}
    for tok in text.split():
        key, sep, val = tok.partition("=")
        if not sep:
            raise ValidationError(f"expected key=value, got {tok!r}")
        fields[key] = val
    try:
        m, n, pi = int(fields["m"]), int(fields["n"]), fields["pi"]
    except KeyError as exc:
        raise ValidationError(f"partition text is missing {exc}") from exc
    except ValueError as exc:
        raise ValidationError(f"bad dimension in {text!r}") from exc
    return validate(m, n, parse_components(pi))


def format_partition(p: Partition) -> str:
    return f"m={p.m} n={p.n} pi={format_components(p)}"


# --- renumbered form ---------------------------------------------------------

@dataclass(frozen=True)
class NormalizedPartition:
    """A partition renumbered so mixed components come first, then p-only, then q-only.

    ``permutation[i-1]`` is the new index of old index ``i``; it maps
    ``{1..m}`` and ``{m+1..m+n}`` onto themselves. ``renumbered`` lists the
    components in their new order: ``1..a`` mixed (component ``j`` contains
    ``j`` and ``m+j``), ``a+1..b`` inside the p-block, ``b+1..k`` inside the
    q-block.
    """

    base: Partition
    permutation: tuple[int, ...]
    renumbered: tuple[tuple[int, ...], ...]
    a: int
    b: int

    @property
    def k(self) -> int:
        return len(self.renumbered)

    def as_partition(self) -> Partition:
        return Partition(self.base.m, self.base.n,
                         tuple(sorted(self.renumbered, key=lambda c: c[0])))

    def apply(self, v: Sequence[int]) -> list[int]:
        """Move coordinate ``i`` of ``v`` to position ``permutation[i-1]``."""
        out = [0] * len(v)
        for i, x in enumerate(v):
            out[self.permutation[i] - 1] = x
        return out

    def pure_p_sizes(self) -> list[int]:
        return [len(c) for c in self.renumbered[self.a:self.b]]


def normalize(p: Partition) -> NormalizedPartition:
    m, n = p.m, p.n
    mixed, p_only, q_only = [], [], []
    for comp in p.components:
        qs = [i for i in comp if i <= m]
        ps = [i for i in comp if i > m]
        if qs and ps:
            mixed.append(comp)
        elif ps:
            p_only.append(comp)
        else:
            q_only.append(comp)
    mixed.sort(key=lambda c: min(i for i in c if i <= m))
    p_only.sort(key=min)
    q_only.sort(key=min)

    perm: dict[int, int] = {}
    for j, comp in enumerate(mixed, start=1):
        perm[min(i for i in comp if i <= m)] = j
        perm[min(i for i in comp if i > m)] = m + j
    a = len(mixed)
    free_q = iter(range(a + 1, m + 1))
    free_p = iter(range(m + a + 1, m + n + 1))
    for comp in mixed + p_only + q_only:
        for i in comp:
            if i not in perm:
                perm[i] = next(free_q) if i <= m else next(free_p)
    permutation = tuple(perm[i] for i in range(1, m + n + 1))
    renumbered = tuple(tuple(sorted(perm[i] for i in comp)) for comp in mixed + p_only + q_only)
    return NormalizedPartition(p, permutation, renumbered, a, a + len(p_only))


def _check_q_admissible(q: Sequence[int], npart: NormalizedPartition) -> None:
    for comp in npart.renumbered[npart.b:]:
        if gcd_many([q[i - 1] for i in comp]) != 1:
            raise ValidationError("q not admissible")


def count_admissible_p(q: Sequence[int], beta: float, npart: NormalizedPartition,
                       budget: int = DEFAULT_BUDGET) -> int:
    """Count ``p`` in ``{1..floor(beta|q|)}^n`` with ``(q, p)`` primitive on every component.

    ``q`` and ``p`` are read in the renumbered coordinates of ``npart``. The
    pure-q components must already be primitive in ``q``.
    """
    m, n = npart.base.m, npart.base.n
    if len(q) != m or any(x < 1 for x in q):
        raise ValidationError(f"q must be a positive vector of length {m}")
    _check_q_admissible(q, npart)
    bound = math.floor(beta * max(q))
    if bound < 1:
        return 0
    if bound**n > budget:
        raise BudgetExceeded(f"{bound}^{n} candidate p exceed the budget {budget}")
    # the components only couple p with fixed q entries, so count per component
    total = 1
    for comp in npart.renumbered[: npart.b]:
        q_part = [q[i - 1] for i in comp if i <= m]
        g0 = gcd_many(q_part) if q_part else 0
        width = sum(1 for i in comp if i > m)
        total *= sum(1 for ps in product(range(1, bound + 1), repeat=width)
                     if math.gcd(g0, *ps) == 1)
    return total


def admissible_lower_bound(q: Sequence[int], beta: float, npart: NormalizedPartition) -> float:
    """The product ``beta^n |q|^n prod zeta(d_j)^-1 prod_{j<=a} phi(q_j)/q_j``."""
    n = npart.base.n
    val = (beta * max(q)) ** n
    for d in npart.pure_p_sizes():
        val /= zeta(d, 1e-12)
    for j in range(npart.a):
        val *= euler_phi(q[j]) / q[j]
    return val
