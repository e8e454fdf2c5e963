"""The block group Gamma_pi = prod_j SL(pi_j, Z) and its action.

Group elements are integer matrices of size ``m+n`` stored as tuples of
Python ints, so products never overflow silently; entries are still checked
against ``2**62`` to flag words that grow out of hand. A *word* is a tuple of
:class:`Letter`; the word ``(w1, ..., wk)`` denotes the product ``w1 w2 ... wk``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import partitions as parts
from .errors import BudgetExceeded, OracleMismatch, ValidationError
from .psi import PsiFunction

ENTRY_LIMIT = 2**62

Matrix = tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class Letter:
    """``E_rs^e``: the identity plus ``e`` at (r, s), 1-based, ``r != s``.

    ``e = +-1`` gives the generators; other exponents are compressed powers.
    """

    r: int
    s: int
    e: int = 1

    def inverse(self) -> "Letter":
        return Letter(self.r, self.s, -self.e)

    def apply(self, v: list[int]) -> None:
        v[self.r - 1] += self.e * v[self.s - 1]

    def __str__(self) -> str:
        return f"E{self.r},{self.s}" + ("" if self.e == 1 else f"^{self.e}")


Word = tuple[Letter, ...]


def parse_letter(text: str) -> Letter:
    body, _, exp = text.strip().partition("^")
    if not body.startswith("E"):
        raise ValidationError(f"bad letter {text!r}")
    try:
        r, s = (int(x) for x in body[1:].split(","))
        e = int(exp) if exp else 1
    except ValueError as exc:
        raise ValidationError(f"bad letter {text!r}") from exc
    if r == s or e == 0:
        raise ValidationError(f"bad letter {text!r}")
    return Letter(r, s, e)


def format_word(word: Iterable[Letter]) -> str:
    return " ".join(str(w) for w in word) or "1"


def parse_word(text: str) -> Word:
    text = text.strip()
    if text in ("", "1"):
        return ()
    return tuple(parse_letter(t) for t in text.split())


def word_length(word: Word) -> int:
    """Length in the generators ``E_rs^{+-1}`` (powers expanded)."""
    return sum(abs(w.e) for w in word)


def simplify(word: Sequence[Letter]) -> Word:
    """Merge adjacent powers of the same transvection and drop trivial ones."""
    out: list[Letter] = []
    for w in word:
        if out and (out[-1].r, out[-1].s) == (w.r, w.s):
            e = out.pop().e + w.e
            if e:
                out.append(Letter(w.r, w.s, e))
        else:
            out.append(w)
    return tuple(out)


def inverse_word(word: Word) -> Word:
    return tuple(w.inverse() for w in reversed(word))


def identity(d: int) -> Matrix:
    return tuple(tuple(int(i == j) for j in range(d)) for i in range(d))


def _check_entries(mat: Matrix) -> None:
    if any(abs(x) >= ENTRY_LIMIT for row in mat for x in row):
        raise BudgetExceeded("matrix entry reached 2**62; word too long to multiply safely")


def matmul(a: Matrix, b: Matrix) -> Matrix:
    d = len(a)
    out = tuple(tuple(sum(a[i][k] * b[k][j] for k in range(d)) for j in range(d)) for i in range(d))
    _check_entries(out)
    return out


def matvec(a: Matrix, v: Sequence[int]) -> tuple[int, ...]:
    return tuple(sum(x * int(y) for x, y in zip(row, v)) for row in a)


def det(mat: Matrix) -> int:
    """Exact determinant by Fraction elimination."""
    a = [[Fraction(x) for x in row] for row in mat]
    d, sign, out = len(a), 1, Fraction(1)
    for c in range(d):
        piv = next((r for r in range(c, d) if a[r][c] != 0), None)
        if piv is None:
            return 0
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            sign = -sign
        out *= a[c][c]
        for r in range(c + 1, d):
            f = a[r][c] / a[c][c]
            if f:
                a[r] = [x - f * y for x, y in zip(a[r], a[c])]
    out *= sign
    assert out.denominator == 1
    return int(out)


def integer_inverse(mat: Matrix) -> Matrix:
    """Inverse of a determinant-1 integer matrix, by Gauss-Jordan over Fractions."""
    d = len(mat)
    a = [[Fraction(x) for x in row] + [Fraction(int(i == j)) for j in range(d)]
         for i, row in enumerate(mat)]
    for c in range(d):
        piv = next((r for r in range(c, d) if a[r][c] != 0), None)
        if piv is None:
            raise ValidationError("matrix is singular")
        a[c], a[piv] = a[piv], a[c]
        p = a[c][c]
        a[c] = [x / p for x in a[c]]
        for r in range(d):
            if r != c and a[r][c] != 0:
                f = a[r][c]
                a[r] = [x - f * y for x, y in zip(a[r], a[c])]
    inv = tuple(tuple(a[i][d + j] for j in range(d)) for i in range(d))
    if any(x.denominator != 1 for row in inv for x in row):
        raise ValidationError("matrix has no integer inverse")
    out = tuple(tuple(int(x) for x in row) for row in inv)
    _check_entries(out)
    return out


@dataclass(frozen=True)
class GroupElement:
    matrix: Matrix
    factorization: Word | None = None

    @property
    def dim(self) -> int:
        return len(self.matrix)

    @classmethod
    def from_word(cls, word: Sequence[Letter], d: int) -> "GroupElement":
        mat = [list(row) for row in identity(d)]
        # right-multiplying by E_rs^e adds e * column r to column s
        for w in word:
            r, s = w.r - 1, w.s - 1
            for i in range(d):
                mat[i][s] += w.e * mat[i][r]
        out = tuple(tuple(row) for row in mat)
        _check_entries(out)
        return cls(out, tuple(word))

    @classmethod
    def from_matrix(cls, mat) -> "GroupElement":
        out = tuple(tuple(int(x) for x in row) for row in mat)
        d = len(out)
        if any(len(row) != d for row in out):
            raise ValidationError("matrix must be square")
        if det(out) != 1:
            raise ValidationError("matrix must have determinant 1")
        return cls(out)

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        word = None
        if self.factorization is not None and other.factorization is not None:
            word = self.factorization + other.factorization
        return GroupElement(matmul(self.matrix, other.matrix), word)

    def __call__(self, v: Sequence[int]) -> tuple[int, ...]:
        return matvec(self.matrix, v)

    def inverse(self) -> "GroupElement":
        if self.factorization is not None:
            return GroupElement.from_word(inverse_word(self.factorization), self.dim)
        return GroupElement(integer_inverse(self.matrix))

    def norm(self) -> int:
        return max(abs(x) for row in self.matrix for x in row)

    def as_array(self) -> np.ndarray:
        return np.array(self.matrix, dtype=object)


def generators(p: parts.Partition) -> list[GroupElement]:
    """Elementary transvections ``E_rs`` and their inverses inside each component."""
    out = []
    for comp in p.components:
        for r in comp:
            for s in comp:
                if r != s:
                    for e in (1, -1):
                        out.append(GroupElement.from_word((Letter(r, s, e),), p.dim))
    return out


def _letters(p: parts.Partition) -> list[Letter]:
    return [g.factorization[0] for g in generators(p)]


@dataclass(frozen=True)
class OrbitBall:
    vectors: frozenset[tuple[int, ...]]
    complete: bool
    depth: int

    def __len__(self) -> int:
        return len(self.vectors)


def orbit_ball(p: parts.Partition, norm_bound: int, word_budget: int) -> OrbitBall:
    """Breadth-first closure of ``(1, ..., 1)`` under the generators, pruned to ``|v| <= norm_bound``.

    ``word_budget`` caps the BFS depth (the word length). ``complete`` is true
    only when the frontier emptied before the cap.
    """
    if norm_bound < 1:
        raise ValidationError(f"norm_bound must be >= 1, got {norm_bound}")
    if word_budget < 0:
        raise ValidationError(f"word_budget must be >= 0, got {word_budget}")
    letters = _letters(p)
    base = (1,) * p.dim
    seen = {base}
    frontier = [base]
    depth = 0
    while frontier and depth < word_budget:
        nxt = []
        for v in frontier:
            for w in letters:
                u = list(v)
                w.apply(u)
                t = tuple(u)
                if max(map(abs, t)) <= norm_bound and t not in seen:
                    seen.add(t)
                    nxt.append(t)
        frontier = nxt
        depth += 1
    for v in seen:
        if not parts.is_in_P_pi(v, p):
            raise OracleMismatch(f"orbit produced {v}, which is not in P(pi)")
    return OrbitBall(frozenset(seen), not frontier, depth)


def primitive_ball(p: parts.Partition, norm_bound: int) -> set[tuple[int, ...]]:
    """All ``v`` in ``P(pi)`` with ``|v| <= norm_bound``, by direct gcd tests."""
    rng = range(-norm_bound, norm_bound + 1)
    out = set()
    for v in np.ndindex(*(len(rng),) * p.dim):
        u = tuple(x - norm_bound for x in v)
        if parts.is_in_P_pi(u, p):
            out.add(u)
    return out


def _reduce_component(v: list[int], comp: Sequence[int]) -> list[Letter]:
    """Letters ``h1, h2, ...`` (applied in that order) taking ``v`` to 1 on ``comp``."""
    steps: list[Letter] = []

    def do(letter: Letter) -> None:
        letter.apply(v)
        steps.append(letter)

    idx = list(comp)
    while sum(1 for i in idx if v[i - 1]) > 1:
        nz = [i for i in idx if v[i - 1]]
        big = max(nz, key=lambda i: (abs(v[i - 1]), -i))
        small = min((i for i in nz if i != big), key=lambda i: (abs(v[i - 1]), i))
        t = v[big - 1] // v[small - 1]
        do(Letter(big, small, -t))
    piv = next(i for i in idx if v[i - 1])
    if abs(v[piv - 1]) != 1:
        raise ValidationError(f"coordinates {tuple(comp)} are not coprime")
    for i in idx:
        if i != piv:
            do(Letter(i, piv, v[piv - 1]))
    if v[piv - 1] == -1:
        other = next(i for i in idx if i != piv)
        do(Letter(piv, other, 2))
    return steps


def reduce_to_base(v: Sequence[int], p: parts.Partition) -> Word:
    """A word ``w`` with ``w (1, ..., 1) = v``, found by gcd descent in each component.

    Within a component the largest coordinate is reduced against the smallest
    non-zero one (lowest index breaks ties) until one non-zero entry, +-1, remains.
    The word is checked by multiplying it out.
    """
    v = [int(x) for x in v]
    if len(v) != p.dim:
        raise ValidationError(f"vector has length {len(v)}, expected {p.dim}")
    if not parts.is_in_P_pi(v, p):
        raise ValidationError(f"{tuple(v)} is not in P(pi); no word reaches it")
    work = list(v)
    steps: list[Letter] = []
    for comp in p.components:
        steps.extend(_reduce_component(work, comp))
    word = simplify(h.inverse() for h in steps)
    g = GroupElement.from_word(word, p.dim)
    if g((1,) * p.dim) != tuple(v):
        raise OracleMismatch(f"word for {tuple(v)} does not verify")
    return word


def act_right(X, g: GroupElement, inverse: bool = False) -> np.ndarray:
    """``X g`` or ``X g^-1`` for a real ``n x (m+n)`` matrix ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != g.dim:
        raise ValidationError(f"X has shape {X.shape}, needs {g.dim} columns")
    mat = g.inverse().matrix if inverse else g.matrix
    return X @ np.array(mat, dtype=np.float64)


def act_right_exact(X, g: GroupElement, inverse: bool = False) -> list[list[Fraction]]:
    mat = g.inverse().matrix if inverse else g.matrix
    rows = [[Fraction(x) for x in row] for row in np.asarray(X, dtype=np.float64).tolist()]
    d = g.dim
    return [[sum((row[k] * mat[k][j] for k in range(d)), Fraction(0)) for j in range(d)]
            for row in rows]


def sup_norm(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    return float(np.abs(a).max()) if a.size else 0.0


def largeness_constant(theta, phi) -> float:
    """``max(1, 2 m n |Phi^-1| |Theta|)``."""
    theta = np.asarray(theta, dtype=np.float64)
    n, m = theta.shape
    return max(1.0, 2 * m * n * sup_norm(np.linalg.inv(np.asarray(phi, dtype=np.float64)))
               * sup_norm(theta))


def minimal_a(theta, phi, g: GroupElement) -> int:
    """Smallest integer ``a`` strictly above ``(m+n)|g| max(1, 2mn|Phi^-1||Theta|)``."""
    return math.floor(g.dim * g.norm() * largeness_constant(theta, phi)) + 1


@dataclass(frozen=True)
class TransportRecord:
    q: tuple[int, ...]
    p: tuple[int, ...]
    theta: np.ndarray
    phi: np.ndarray
    residual_before: float
    residual_after: float
    exact_identity: bool
    norm_chain: bool
    above_threshold: bool
    bound_holds: bool | None
    flags: tuple[str, ...] = ()

    @property
    def residual_gap(self) -> float:
        return abs(self.residual_after - self.residual_before)


def _residual(X: np.ndarray, v: Sequence[int], y: np.ndarray) -> float:
    n, d = X.shape
    out = 0.0
    for i in range(n):
        acc = 0.0
        for j in range(d):
            acc += X[i, j] * float(v[j])
        out = max(out, abs(acc - y[i]))
    return out


def transport_solution(theta, phi, y, q: Sequence[int], p: Sequence[int], g: GroupElement,
                       l: int = 1, a: int = 1, psi: PsiFunction | None = None) -> TransportRecord:
    """Move the solution ``v = (q, p)`` of ``(Theta, Phi)`` to ``g v`` for ``(Theta, Phi) g^-1``.

    Checks that the residual is unchanged (exactly, over the rationals given by
    the float inputs, and to 1e-12 in floats) and that ``|g v| <= (m+n)|g||v|``.
    When ``|p| <= c|q|`` with ``c = max(1, 2mn|Phi^-1||Theta|)`` and ``a`` exceeds
    ``(m+n)|g|c``, also checks ``|q'| <= a|q|`` and, given ``psi``, that the
    residual stays below ``psi_l(|q'|)``.
    """
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if theta.ndim != 2 or phi.shape != (theta.shape[0],) * 2:
        raise ValidationError("theta must be n x m and phi n x n")
    n, m = theta.shape
    if g.dim != m + n or len(q) != m or len(p) != n:
        raise ValidationError("dimension mismatch between (theta, phi), g and v")
    if abs(np.linalg.det(phi)) == 0:
        raise ValidationError("phi not invertible")
    if l < 1 or a < 1:
        raise ValidationError("l and a must be positive integers")
    y = np.asarray(y, dtype=np.float64).reshape(n)
    X = np.hstack([theta, phi])
    v = tuple(int(x) for x in q) + tuple(int(x) for x in p)
    qn = max(abs(x) for x in q)
    before = _residual(X, v, y)
    flags = []
    if psi is not None and qn > 0 and before > psi(a * l * qn):
        raise ValidationError(f"v does not satisfy the inequality: {before} > psi({a * l * qn})")

    v2 = g(v)
    X2 = act_right(X, g, inverse=True)
    after = _residual(X2, v2, y)

    # exact check: (X g^-1)(g v) = X v over the rationals
    X2e = act_right_exact(X, g, inverse=True)
    lhs = [sum((row[j] * v2[j] for j in range(m + n)), Fraction(0)) for row in X2e]
    rhs = [sum((Fraction(x) * v[j] for j, x in enumerate(row)), Fraction(0)) for row in X.tolist()]
    exact = lhs == rhs
    if abs(after - before) > 1e-12:
        flags.append("float residual drift above 1e-12")

    vn, v2n = max(map(abs, v)), max(map(abs, v2))
    chain = v2n <= (m + n) * g.norm() * vn
    c = largeness_constant(theta, phi)
    above = qn > 0 and max(map(abs, p)) <= c * qn
    q2 = v2[:m]
    q2n = max(map(abs, q2))
    bound = None
    if not above:
        flags.append("below largeness threshold")
    elif a <= (m + n) * g.norm() * c:
        flags.append("a not above (m+n)|g| max(1, 2mn|Phi^-1||Theta|)")
    else:
        if q2n > a * qn:
            raise OracleMismatch(f"|q'| = {q2n} exceeds a|q| = {a * qn}")
        if q2n == 0:
            flags.append("transported q is zero")
        elif psi is not None:
            bound = after <= psi.dilate(l)(q2n) + 1e-12
    return TransportRecord(tuple(q2), tuple(v2[m:]), X2[:, :m], X2[:, m:], before, after,
                           exact, chain, above, bound, tuple(flags))


def random_element(p: parts.Partition, length: int, rng: np.random.Generator) -> GroupElement:
    letters = _letters(p)
    word = tuple(letters[i] for i in rng.integers(0, len(letters), size=length))
    return GroupElement.from_word(word, p.dim)


# --- plain-text serialization ------------------------------------------------

def format_vectors(vectors: Iterable[Sequence[int]]) -> str:
    return "".join(" ".join(str(x) for x in v) + "\n" for v in sorted(vectors))


def parse_vectors(text: str) -> list[tuple[int, ...]]:
    return [tuple(int(x) for x in line.split()) for line in text.splitlines() if line.strip()]


def format_words(words: Iterable[Word]) -> str:
    return "".join(format_word(w) + "\n" for w in words)


def parse_words(text: str) -> list[Word]:
    return [parse_word(line) for line in text.splitlines()]
