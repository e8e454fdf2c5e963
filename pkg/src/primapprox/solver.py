"""Enumerate integer solutions of ``|Theta q + Phi p - y| <= psi(|q|)``.

Solutions are produced shell by shell (``|q| = 1, 2, ..., Q``), lexicographic
in ``q`` and then ``p`` inside a shell. Shells are independent, so a run may be
split across threads; chunks are merged in shell order and the output does not
depend on the thread count.
"""
from __future__ import annotations

import bisect
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import partitions as parts
from .arith import DEFAULT_BUDGET
from .errors import BudgetExceeded, ValidationError
from .psi import PsiFunction, series_partial_sums
from ._backend import kernels

#: condition number above which Phi is treated as singular
PHI_COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    m: int
    n: int
    theta: np.ndarray
    y: np.ndarray
    psi: PsiFunction
    partition: parts.Partition
    phi: np.ndarray | None = None

    def __post_init__(self):
        theta = np.ascontiguousarray(np.asarray(self.theta, dtype=np.float64).reshape(self.n, self.m))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=np.float64).reshape(self.n))
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "y", y)
        if (self.partition.m, self.partition.n) != (self.m, self.n):
            raise ValidationError(
                f"partition is over m={self.partition.m}, n={self.partition.n}, "
                f"instance has m={self.m}, n={self.n}")
        if self.phi is not None:
            phi = np.ascontiguousarray(np.asarray(self.phi, dtype=np.float64).reshape(self.n, self.n))
            object.__setattr__(self, "phi", phi)
            if not np.isfinite(phi).all() or np.linalg.cond(phi) > PHI_COND_LIMIT:
                raise ValidationError("phi not invertible")

    @property
    def normalized(self) -> bool:
        return self.phi is None

    @property
    def phi_inv(self) -> np.ndarray | None:
        if self.phi is None:
            return None
        return np.ascontiguousarray(np.linalg.inv(self.phi))

    def residual(self, q: Sequence[int], p: Sequence[int]) -> float:
        """``|Theta q + Phi p - y|`` evaluated in the enumerators' operation order."""
        worst = 0.0
        for i in range(self.n):
            t = 0.0
            for j in range(self.m):
                t = t + self.theta[i, j] * float(q[j])
            if self.phi is None:
                s = float(p[i])
            else:
                s = 0.0
                for j in range(self.n):
                    s = s + self.phi[i, j] * float(p[j])
            worst = max(worst, abs((t + s) - self.y[i]))
        return worst


@dataclass(frozen=True)
class SolutionRecord:
    q: tuple[int, ...]
    p: tuple[int, ...]
    shell: int
    residual: float
    primitive: tuple[bool, ...]

    @property
    def v(self) -> tuple[int, ...]:
        return self.q + self.p


@dataclass(frozen=True)
class GrowthCurve:
    """``(Q, N(Q), S(Q))`` triples: solution counts and series partial sums."""

    points: tuple[tuple[int, int, float], ...]

    @property
    def Qs(self) -> list[int]:
        return [pt[0] for pt in self.points]

    @property
    def counts(self) -> list[int]:
        return [pt[1] for pt in self.points]

    @property
    def sums(self) -> list[float]:
        return [pt[2] for pt in self.points]


def _shell_chunks(Q: int, m: int, threads: int) -> list[tuple[int, int]]:
    if threads <= 1 or Q < 2:
        return [(1, Q + 1)]
    # shell s holds ~ s^(m-1) points; cut so chunks carry similar work
    weights = np.array([(2 * s + 1) ** m - (2 * s - 1) ** m for s in range(1, Q + 1)], dtype=float)
    cum = np.cumsum(weights)
    cuts = [1]
    for t in range(1, threads):
        s = int(np.searchsorted(cum, cum[-1] * t / threads)) + 2
        if cuts[-1] < s <= Q:
            cuts.append(s)
    cuts.append(Q + 1)
    return list(zip(cuts[:-1], cuts[1:]))


def _check_budget(Q: int, m: int, budget: int) -> None:
    if (2 * Q + 1) ** m > budget:
        raise BudgetExceeded(f"(2*{Q}+1)^{m} values of q exceed the enumeration budget {budget}")


def enumerate_arrays(inst: ProblemInstance, Q: int, constrained: bool = True,
                     budget: int = DEFAULT_BUDGET, threads: int = 1):
    """Raw ``(qs, ps, residuals)`` arrays, in shell-then-lexicographic order."""
    if Q < 1:
        raise ValidationError(f"Q must be positive, got {Q}")
    _check_budget(Q, inst.m, budget)
    psi_by_shell = inst.psi.values(Q)
    comp = inst.partition.component_ids()
    phi, phi_inv = inst.phi, inst.phi_inv

    def run(chunk):
        lo, hi = chunk
        return kernels.enumerate_shells(inst.theta, phi, phi_inv, inst.y, psi_by_shell,
                                        lo, hi, comp, inst.partition.k, constrained)

    chunks = _shell_chunks(Q, inst.m, threads)
    if len(chunks) == 1:
        results = [run(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, chunks))
    qs = np.concatenate([r[0] for r in results]).reshape(-1, inst.m)
    ps = np.concatenate([r[1] for r in results]).reshape(-1, inst.n)
    rs = np.concatenate([r[2] for r in results])
    return qs, ps, rs


def _records(inst: ProblemInstance, qs, ps, rs) -> list[SolutionRecord]:
    out = []
    for q, p, r in zip(qs.tolist(), ps.tolist(), rs.tolist()):
        gcds = parts.component_gcds(q + p, inst.partition)
        out.append(SolutionRecord(tuple(q), tuple(p), max(abs(x) for x in q), r,
                                  tuple(g == 1 for g in gcds)))
    return out


def enumerate_solutions(inst: ProblemInstance, Q: int, constrained: bool = True,
                        budget: int = DEFAULT_BUDGET, threads: int = 1) -> list[SolutionRecord]:
    """Solutions of the normalized system ``|Theta q + p - y| <= psi(|q|)``, ``1 <= |q| <= Q``.

    With ``constrained`` only points of ``P(pi)`` are kept.
    """
    if not inst.normalized:
        raise ValidationError("instance has a free Phi; use enumerate_affine")
    return _records(inst, *enumerate_arrays(inst, Q, constrained, budget, threads))


def enumerate_affine(inst: ProblemInstance, Q: int, constrained: bool = True,
                     budget: int = DEFAULT_BUDGET, threads: int = 1) -> list[SolutionRecord]:
    """Solutions of ``|Theta q + Phi p - y| <= psi(|q|)`` for an invertible ``Phi``.

    Candidates for ``p`` come from the box of half-width ``n |Phi^-1| psi(|q|)``
    around ``Phi^-1 (y - Theta q)``; each one is checked against the inequality.
    """
    if inst.normalized:
        inst = ProblemInstance(inst.m, inst.n, inst.theta, inst.y, inst.psi, inst.partition,
                               phi=np.eye(inst.n))
    return _records(inst, *enumerate_arrays(inst, Q, constrained, budget, threads))


def solve(inst: ProblemInstance, Q: int, constrained: bool = True,
          budget: int = DEFAULT_BUDGET, threads: int = 1) -> list[SolutionRecord]:
    """Dispatch to :func:`enumerate_solutions` or :func:`enumerate_affine`."""
    return _records(inst, *enumerate_arrays(inst, Q, constrained, budget, threads))


def growth_curve(inst: ProblemInstance, Qs: Sequence[int], constrained: bool = True,
                 budget: int = DEFAULT_BUDGET, threads: int = 1) -> GrowthCurve:
    Qs = [int(Q) for Q in Qs]
    if not Qs:
        raise ValidationError("empty Q schedule")
    if any(b <= a for a, b in zip(Qs, Qs[1:])) or Qs[0] < 1:
        raise ValidationError(f"Q schedule must be positive and strictly increasing, got {Qs}")
    qs, _, _ = enumerate_arrays(inst, Qs[-1], constrained, budget, threads)
    shells = np.abs(qs).max(axis=1).tolist() if len(qs) else []
    sums = series_partial_sums(inst.psi, inst.m, inst.n, Qs)
    return GrowthCurve(tuple((Q, bisect.bisect_right(shells, Q), S) for Q, S in zip(Qs, sums)))


def fiber_hypercube(theta_rest, phi, y, v: Sequence[int], psi_value: float,
                    m: int | None = None) -> list[tuple[float, float]]:
    """The set of first columns ``xi`` putting ``((xi, theta_rest), phi)`` in the strip of ``v``.

    ``v = (q_1, q', p)``. Coordinate ``i`` is the interval of ``xi_i`` with
    ``|q_1 xi_i + theta_i . q' + phi_i . p - y_i| <= psi``: centre
    ``(y_i - phi_i . p - theta_i . q') / q_1``, half-width ``psi / |q_1|``.
    """
    phi = np.atleast_2d(np.asarray(phi, dtype=np.float64))
    n = phi.shape[0]
    y = np.asarray(y, dtype=np.float64).reshape(n)
    if m is None:
        m = len(v) - n
    theta_rest = np.asarray(theta_rest, dtype=np.float64).reshape(n, m - 1)
    q1, q_rest, p = v[0], list(v[1:m]), list(v[m:])
    if len(p) != n:
        raise ValidationError(f"v has length {len(v)}, expected m+n={m + n}")
    if q1 == 0:
        raise ValidationError("first coordinate of q must be non-zero")
    if psi_value < 0:
        raise ValidationError("psi_value must be non-negative")
    half = psi_value / abs(q1)
    out = []
    for i in range(n):
        num = -float(np.dot(phi[i], p)) - float(np.dot(theta_rest[i], q_rest)) + y[i]
        centre = num / q1
        out.append((centre - half, centre + half))
    return out


# --- random instances --------------------------------------------------------

def sample_instance(m: int, n: int, psi: PsiFunction, partition: parts.Partition,
                    rng: np.random.Generator, homogeneous: bool = False,
                    affine: bool = False) -> ProblemInstance:
    """Theta (and Phi) entries uniform on [-1/2, 1/2]; y uniform on [-1/2, 1/2]^n or zero."""
    theta = rng.uniform(-0.5, 0.5, size=(n, m))
    y = np.zeros(n) if homogeneous else rng.uniform(-0.5, 0.5, size=n)
    phi = rng.uniform(-0.5, 0.5, size=(n, n)) if affine else None
    return ProblemInstance(m, n, theta, y, psi, partition, phi=phi)


def simultaneous_preset(n: int, psi: PsiFunction, rng: np.random.Generator,
                        homogeneous: bool = False) -> ProblemInstance:
    """``m = 1`` with the single component ``{1..n+1}``: ``gcd(q, p_1..p_n) = 1``."""
    return sample_instance(1, n, psi, parts.trivial(1, n), rng, homogeneous)


def linear_form_pairs_preset(k: int, psi: PsiFunction, rng: np.random.Generator) -> ProblemInstance:
    """One linear form in ``2k`` variables, coprime in consecutive pairs, with a free last coefficient."""
    return sample_instance(2 * k - 1, 1, psi, parts.pairs(k), rng, affine=True)


def enumerate_naive(inst: ProblemInstance, Q: int, constrained: bool = True,
                    budget: int = DEFAULT_BUDGET) -> dict[tuple[int, ...], float]:
    """Reference enumerator: every ``q`` in the box against every ``p`` in a box
    large enough to hold all solutions. Returns ``{(q..., p...): residual}``.

    Residuals use the same floating-point operation order as the kernels.
    """
    from ._pykernels import _linear, _primitive_mask, shell_box

    if Q < 1:
        raise ValidationError(f"Q must be positive, got {Q}")
    psi = inst.psi.values(Q)
    # |Phi p| <= |y| + |Theta q| + psi coordinatewise; map that box back through Phi^-1
    reach = np.abs(inst.y) + np.abs(inst.theta).sum(axis=1) * Q + np.nanmax(psi)
    if not inst.normalized:
        reach = np.abs(inst.phi_inv) @ reach
    P = np.ceil(reach).astype(np.int64) + 1
    qs = shell_box(1, Q + 1, inst.m)
    size = int(np.prod(2 * P + 1))
    if len(qs) * size > 50 * budget:
        raise BudgetExceeded("naive enumeration box too large")
    grid = np.indices(tuple(2 * P + 1), dtype=np.int64).reshape(inst.n, -1).T - P
    s = grid.astype(np.float64) if inst.normalized else _linear(inst.phi, grid)
    comp = inst.partition.component_ids()
    out = {}
    step = max(1, 4_000_000 // len(grid))
    for lo in range(0, len(qs), step):
        qb = qs[lo:lo + step]
        t = _linear(inst.theta, qb)
        resid = np.abs((t[:, None, :] + s[None, :, :]) - inst.y[None, None, :]).max(axis=2)
        shells = np.abs(qb).max(axis=1)
        qi, pi = np.nonzero(resid <= psi[shells][:, None])
        vecs = np.column_stack([qb[qi], grid[pi]])
        keep = _primitive_mask(vecs, comp, inst.partition.k) if constrained else np.ones(len(qi), bool)
        for v, r in zip(vecs[keep].tolist(), resid[qi, pi][keep].tolist()):
            out[tuple(v)] = r
    return out
