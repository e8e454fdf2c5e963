"""Monte Carlo estimates of strip-set measures on the box ``|Theta| <= 1/2``.

Samples are drawn in fixed-size chunks; chunk ``c`` of stream ``k`` always
uses the generator seeded by ``SeedSequence(seed, spawn_key=(k, c))``, so
estimates are bit-identical for a given seed whatever the thread count.

Strip sets for a fixed non-zero ``q``:

* ``R``: ``|Theta q + p - y| <= psi`` for one explicit ``p``;
* ``E``: union of the ``R`` strips over ``p`` with ``(q, p)`` in ``P(pi)``;
* ``F``: union over every integer ``p``, i.e. ``||Theta q - y|| <= psi``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import partitions as parts
from .arith import DEFAULT_BUDGET, gcd_many
from .errors import BudgetExceeded, ValidationError
from .psi import PsiFunction, check_decay_hypothesis, series_partial_sums
from ._backend import kernels
from ._pykernels import shell_box

CHUNK = 1 << 16
VARIANTS = ("R", "E", "F")
#: two-sided 99% point of the standard normal
Z99 = 2.5758293035489004


@dataclass(frozen=True)
class MeasureEstimate:
    estimate: float
    stderr: float
    samples: int
    seed: int
    hits: int = 0
    warnings: tuple[str, ...] = ()

    def within(self, target: float, sigmas: float = 3.0) -> bool:
        return abs(self.estimate - target) <= sigmas * self.stderr


@dataclass(frozen=True)
class StripQuery:
    q: tuple[int, ...]
    y: tuple[float, ...]
    psi_value: float
    variant: str = "F"
    p: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(int(x) for x in self.q))
        object.__setattr__(self, "y", tuple(float(x) for x in self.y))
        if not any(self.q):
            raise ValidationError("q must be non-zero")
        if not self.psi_value > 0:
            raise ValidationError(f"psi_value must be positive, got {self.psi_value}")
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == "R":
            if self.p is None or len(self.p) != len(self.y):
                raise ValidationError("variant R needs an explicit p of length n")
            object.__setattr__(self, "p", tuple(int(x) for x in self.p))

    @property
    def m(self) -> int:
        return len(self.q)

    @property
    def n(self) -> int:
        return len(self.y)


def substream(seed: int, *keys: int) -> np.random.Generator:
    if not 0 <= seed < 2**64:
        raise ValidationError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=keys))


def sample_box(rng: np.random.Generator, size: int, n: int, m: int) -> np.ndarray:
    """``size`` matrices with entries uniform on [-1/2, 1/2), shape ``(size, n, m)``.

    The upper face of the closed box is missed; it has measure zero.
    """
    return np.ascontiguousarray(rng.uniform(-0.5, 0.5, size=(size, n, m)))


def _chunks(samples: int) -> list[tuple[int, int]]:
    return [(c, min(CHUNK, samples - c * CHUNK)) for c in range(-(-samples // CHUNK))]


def _map_chunks(fn: Callable, samples: int, threads: int) -> list:
    chunks = _chunks(samples)
    if threads <= 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


def _trivial_comp(m: int, n: int) -> tuple[np.ndarray, int]:
    return np.zeros(m + n, dtype=np.int64), 1


def membership_mask(thetas: np.ndarray, query: StripQuery,
                    partition: parts.Partition | None = None) -> np.ndarray:
    """Boolean mask over ``thetas`` (shape ``(S, n, m)``) of membership in the strip set."""
    thetas = np.ascontiguousarray(thetas, dtype=np.float64)
    S, n, m = thetas.shape
    if (m, n) != (query.m, query.n):
        raise ValidationError(f"theta is {n}x{m}, query needs {query.n}x{query.m}")
    y = np.asarray(query.y, dtype=np.float64)
    q = np.asarray(query.q, dtype=np.int64)
    if query.variant == "R":
        ok = np.ones(S, dtype=bool)
        for i in range(n):
            acc = np.zeros(S)
            for j in range(m):
                acc = acc + thetas[:, i, j] * float(q[j])
            ok &= np.abs((acc + float(query.p[i])) - y[i]) <= query.psi_value
        return ok
    if query.variant == "E":
        if partition is None:
            raise ValidationError("variant E needs a partition")
        comp, k = partition.component_ids(), partition.k
    else:
        comp, k = _trivial_comp(m, n)
    counts = kernels.strip_hit_counts(thetas, q[None, :].copy(), np.array([query.psi_value]),
                                      np.zeros(1, dtype=np.int64), y, comp, k,
                                      query.variant == "E", 1)
    return counts[:, 0] > 0


def membership(theta, query: StripQuery, partition: parts.Partition | None = None) -> bool:
    theta = np.asarray(theta, dtype=np.float64).reshape(1, query.n, query.m)
    return bool(membership_mask(theta, query, partition)[0])


def _estimate(hits: int, samples: int, seed: int, warnings=()) -> MeasureEstimate:
    # the sampling box has volume 1, so the hit fraction is the measure
    phat = hits / samples
    return MeasureEstimate(phat, math.sqrt(phat * (1 - phat) / samples), samples, seed,
                           hits, tuple(warnings))


def _check_samples(samples: int, budget: int, per_sample: int = 1) -> None:
    if samples < 1000:
        raise ValidationError(f"need at least 1000 samples, got {samples}")
    if samples * per_sample > budget * 100:
        raise BudgetExceeded(f"{samples} samples x {per_sample} strips exceed the budget")


def mc_measure(query: StripQuery, partition: parts.Partition | None, samples: int, seed: int,
               threads: int = 1, stream: int = 0, budget: int = DEFAULT_BUDGET) -> MeasureEstimate:
    """Estimate ``lambda(X_q(y) cap box)`` for the strip set ``X`` named by ``query.variant``."""
    _check_samples(samples, budget)
    warnings = []
    if query.variant == "E" and query.psi_value >= 0.5:
        warnings.append("psi >= 1/2: the strips making up E may overlap")

    def run(chunk):
        c, size = chunk
        thetas = sample_box(substream(seed, stream, c), size, query.n, query.m)
        return int(membership_mask(thetas, query, partition).sum())

    return _estimate(sum(_map_chunks(run, samples, threads)), samples, seed, warnings)


# --- pairs -------------------------------------------------------------------

@dataclass(frozen=True)
class PairClass:
    """How two non-zero integer vectors relate.

    For proportional vectors ``q = s*a`` and ``q2 = s2*a`` with ``gcd(s, s2) = 1``;
    ``big``/``small`` name which of the two has the larger factor.
    """

    kind: str  # "independent" or "proportional"
    a: tuple[int, ...] = ()
    s: int = 0
    s2: int = 0

    @property
    def big_factor(self) -> int:
        return max(abs(self.s), abs(self.s2))


def classify_pair(q: Sequence[int], q2: Sequence[int]) -> PairClass:
    if len(q) != len(q2) or not any(q) or not any(q2):
        raise ValidationError("need two non-zero vectors of the same length")
    for i in range(len(q)):
        for j in range(i + 1, len(q)):
            if q[i] * q2[j] - q[j] * q2[i] != 0:
                return PairClass("independent")
    g = gcd_many(q)
    a0 = [x // g for x in q]
    lead = next(x for x in a0 if x)
    if lead < 0:
        a0 = [-x for x in a0]
    idx = next(i for i, x in enumerate(a0) if x)
    s, s2 = q[idx] // a0[idx], q2[idx] // a0[idx]
    # take the largest common direction so the two factors are coprime
    h = math.gcd(s, s2)
    s, s2 = s // h, s2 // h
    a = tuple(h * x for x in a0)
    if [s * x for x in a] != list(q) or [s2 * x for x in a] != list(q2) or math.gcd(s, s2) != 1:
        raise ValidationError(f"cannot write {q}, {q2} as coprime multiples of one vector")
    return PairClass("proportional", a, s, s2)


def pair_reference(q, q2, psi: PsiFunction, n: int, cls: PairClass) -> float:
    """Independent: the product value ``4^n psi(|q|)^n psi(|q2|)^n`` (exact for F-pairs).
    Proportional: the upper bound ``12^n psi(|big|)^n max(psi(|small|)^n, s_big^-n)``.
    """
    nq, nq2 = max(abs(int(x)) for x in q), max(abs(int(x)) for x in q2)
    if cls.kind == "independent":
        return 4.0**n * psi(nq) ** n * psi(nq2) ** n
    if abs(cls.s) >= abs(cls.s2):
        big, small = nq, nq2
    else:
        big, small = nq2, nq
    return 12.0**n * psi(big) ** n * max(psi(small) ** n, float(cls.big_factor) ** -n)


def mc_pair_measure(q, q2, y, psi: PsiFunction, variant: str, samples: int, seed: int,
                    partition: parts.Partition | None = None, threads: int = 1,
                    stream: int = 0, budget: int = DEFAULT_BUDGET
                    ) -> tuple[MeasureEstimate, PairClass]:
    """Estimate ``lambda(X_q cap X_q2 cap box)``; also returns how ``q`` and ``q2`` relate."""
    if variant not in ("E", "F"):
        raise ValidationError(f"pair variant must be E or F, got {variant!r}")
    q, q2 = [int(x) for x in q], [int(x) for x in q2]
    cls = classify_pair(q, q2)
    _check_samples(samples, budget, 2)
    a = StripQuery(q, y, psi(max(map(abs, q))), variant)
    b = StripQuery(q2, y, psi(max(map(abs, q2))), variant)

    def run(chunk):
        c, size = chunk
        thetas = sample_box(substream(seed, stream, c), size, a.n, a.m)
        both = membership_mask(thetas, a, partition) & membership_mask(thetas, b, partition)
        return int(both.sum())

    return _estimate(sum(_map_chunks(run, samples, threads)), samples, seed), cls


# --- single-strip lower bound ------------------------------------------------

def strip_volume_lower_bound(q, p, y, psi_value: float, m: int, n: int) -> float:
    """Closed-form lower bound ``(psi / (2^(m-2) (m-1)! |q|_2))^n`` on ``lambda(R_v cap box)``.

    Valid when ``|p| <= |q|_2 / 6`` and ``|q|`` is large enough that every
    ``|y_i - p_i| / |q|_2 <= 1/5`` and the slab half-width ``psi/|q|_2`` keeps
    the slab inside the radius-1/4 slice of the inscribed ball.
    """
    q, p, y = list(q), list(p), list(y)
    if len(q) != m or len(p) != n or len(y) != n or not any(q):
        raise ValidationError("dimension mismatch or q = 0")
    q2 = math.sqrt(sum(x * x for x in q))
    vmax = max(abs(yi - pi) / q2 for yi, pi in zip(y, p))
    width = psi_value / q2
    if max(map(abs, p)) > q2 / 6 or vmax > 0.2 or vmax + width > math.sqrt(3) / 4:
        raise ValidationError(
            f"hypothesis of the strip volume bound not met (|p|={max(map(abs, p))}, "
            f"|q|_2={q2:.4g}, max|v_i|={vmax:.4g}, psi/|q|_2={width:.4g})")
    return (psi_value / (2.0 ** (m - 2) * math.factorial(m - 1) * q2)) ** n


# --- shell sums --------------------------------------------------------------

def _check_shell_hypotheses(m: int, n: int, psi: PsiFunction, Q: int) -> None:
    if m == 1 and n == 1:
        raise ValidationError("m and n must not both be 1")
    psis = psi.values(Q)[1:]
    if (psis >= 0.5).any():
        raise ValidationError("psi must stay below 1/2 on the shells used")
    if Q >= 2 and not check_decay_hypothesis(psi, m, n, Q):
        raise ValidationError("j^(m-1) psi(j)^n is not non-increasing")


def shell_hits(m: int, n: int, partition: parts.Partition, psi: PsiFunction, y, Q: int,
               samples: int, seed: int, threads: int = 1, stream: int = 0,
               budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """``hits[s, l]`` = number of ``q`` with ``|q| = l`` whose E-set contains sample ``s``."""
    qs = shell_box(1, Q + 1, m)
    _check_samples(samples, budget, len(qs))
    shell_q = np.abs(qs).max(axis=1)
    psi_q = psi.values(Q)[shell_q]
    y = np.asarray(y, dtype=np.float64).reshape(n)
    comp = partition.component_ids()

    def run(chunk):
        c, size = chunk
        thetas = sample_box(substream(seed, stream, c), size, n, m)
        return kernels.strip_hit_counts(thetas, qs, psi_q, shell_q, y, comp, partition.k,
                                        True, Q + 1)

    return np.concatenate(_map_chunks(run, samples, threads))


@dataclass(frozen=True)
class AveragedBound:
    Q: int
    lhs: float
    lhs_stderr: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs


def averaged_lower_bound(m: int, n: int, partition: parts.Partition, psi: PsiFunction, y,
                         Qs, samples: int, seed: int, threads: int = 1) -> list[AveragedBound]:
    """Estimate ``sum_{1<=|q|<=Q} lambda(E_q cap box)`` next to ``sum_{l<=Q} l^(m-1) psi(l)^n``.

    The left side is the mean number of ``q`` whose E-set contains a uniform
    sample, so one batch of samples serves every cut-off in ``Qs``.
    """
    Qs = sorted(int(Q) for Q in np.atleast_1d(Qs))
    _check_shell_hypotheses(m, n, psi, Qs[-1])
    hits = shell_hits(m, n, partition, psi, y, Qs[-1], samples, seed, threads)
    cum = np.cumsum(hits, axis=1)
    rhs = series_partial_sums(psi, m, n, Qs)
    out = []
    for Q, S in zip(Qs, rhs):
        N = cum[:, Q].astype(np.float64)
        out.append(AveragedBound(Q, float(N.mean()), float(N.std(ddof=1) / math.sqrt(len(N))), S))
    return out


@dataclass(frozen=True)
class RatioPoint:
    Q: int
    first_moment: float   # sum over q of lambda(E_q cap box)
    second_moment: float  # double sum of lambda(E_q cap E_q' cap box)
    ratio: float


def borel_cantelli_trajectory(m: int, n: int, partition: parts.Partition, psi: PsiFunction, y,
                              Qs, samples: int, seed: int, threads: int = 1) -> list[RatioPoint]:
    """``(sum lambda(E_q))^2 / sum sum lambda(E_q cap E_q')`` at each cut-off in ``Qs``.

    With ``N(Theta)`` the number of ``q`` (``1 <= |q| <= Q``) whose E-set holds
    ``Theta``, the single sum is ``E[N]`` and the double sum is ``E[N^2]``.
    """
    Qs = sorted(int(Q) for Q in np.atleast_1d(Qs))
    _check_shell_hypotheses(m, n, psi, Qs[-1])
    hits = shell_hits(m, n, partition, psi, y, Qs[-1], samples, seed, threads)
    cum = np.cumsum(hits, axis=1)
    out = []
    for Q in Qs:
        N = cum[:, Q].astype(np.float64)
        first, second = float(N.mean()), float((N * N).mean())
        ratio = first * first / second if first > 0 else 0.0
        out.append(RatioPoint(Q, first, second, ratio))
    return out


def borel_cantelli_ratio(m: int, n: int, partition: parts.Partition, psi: PsiFunction, y,
                         Q: int, samples: int, seed: int, threads: int = 1) -> float:
    return borel_cantelli_trajectory(m, n, partition, psi, y, [Q], samples, seed, threads)[0].ratio


# --- push-forward uniformity ---------------------------------------------------

@dataclass(frozen=True)
class UniformityResult:
    statistic: float
    dof: int
    z: float
    in_band: bool
    counts: np.ndarray = field(repr=False, compare=False)


def pushforward_check(q, samples: int, bins: int, seed: int, n: int = 1,
                      threads: int = 1) -> UniformityResult:
    """Chi-square test that ``Theta q mod 1`` is uniform on the n-torus for uniform ``Theta``.

    Accepted when the normal approximation ``z = (chi2 - dof)/sqrt(2 dof)``
    lies inside the two-sided 99% band.
    """
    q = np.asarray(q, dtype=np.int64)
    m = len(q)
    if not q.any():
        raise ValidationError("q must be non-zero")
    if bins < 16:
        raise ValidationError(f"need at least 16 bins per axis, got {bins}")
    cells = bins**n
    if cells > samples / 10 or samples / cells < 50:
        raise ValidationError("under-sampled histogram")

    def run(chunk):
        c, size = chunk
        thetas = sample_box(substream(seed, 0, c), size, n, m)
        flat = np.zeros(size, dtype=np.int64)
        for i in range(n):
            acc = np.zeros(size)
            for j in range(m):
                acc = acc + thetas[:, i, j] * float(q[j])
            frac = acc - np.floor(acc)
            idx = np.minimum((frac * bins).astype(np.int64), bins - 1)
            flat = flat * bins + idx
        return np.bincount(flat, minlength=cells)

    counts = np.sum(_map_chunks(run, samples, threads), axis=0)
    expected = samples / cells
    stat = float(((counts - expected) ** 2).sum() / expected)
    dof = cells - 1
    z = (stat - dof) / math.sqrt(2 * dof)
    return UniformityResult(stat, dof, z, abs(z) <= Z99, counts)
