"""Approximating functions psi: N -> (0, inf) and the series attached to them."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import PrimapproxError, ValidationError

KINDS = ("power", "logpow", "table")


@dataclass(frozen=True)
class PsiFunction:
    """``kappa * base(l * j)`` where ``base`` is one of three families.

    * ``power``:  ``c * x**-s``
    * ``logpow``: ``c / (x**s * log(x+1)**t)``
    * ``table``:  explicit values for ``j = 1..len(table)``, last value repeated after
    """

    kind: str
    c: float = 1.0
    s: float = 0.0
    t: float = 0.0
    table: tuple[float, ...] = ()
    kappa: int = 1
    l: int = 1
    source: str = field(default="", compare=False)

    def __post_init__(self):
        for name in ("c", "s", "t"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.kind not in KINDS:
            raise ValidationError(f"unknown psi kind {self.kind!r}")
        if self.kind == "table":
            if not self.table or any(not v > 0 for v in self.table):
                raise ValidationError("psi table must be non-empty with positive values")
        elif not self.c > 0:
            raise ValidationError(f"psi needs c > 0, got {self.c}")
        if self.s < 0 or self.t < 0:
            raise ValidationError("psi needs s >= 0 and t >= 0")
        if int(self.kappa) != self.kappa or self.kappa < 1:
            raise ValidationError(f"kappa must be a positive integer, got {self.kappa}")
        if int(self.l) != self.l or self.l < 1:
            raise ValidationError(f"l must be a positive integer, got {self.l}")

    def _base(self, x: int) -> float:
        if self.kind == "power":
            return self.c * x ** (-self.s)
        if self.kind == "logpow":
            return self.c / (x**self.s * math.log(x + 1) ** self.t)
        return self.table[min(x, len(self.table)) - 1]

    def __call__(self, j: int) -> float:
        return eval_psi(self, j)

    def values(self, upto: int) -> np.ndarray:
        """``out[j] = psi(j)`` for ``1 <= j <= upto``; ``out[0]`` is NaN."""
        out = np.empty(upto + 1, dtype=np.float64)
        out[0] = np.nan
        for j in range(1, upto + 1):
            out[j] = eval_psi(self, j)
        return out

    def dilate(self, l: int) -> PsiFunction:
        """``psi_l(j) = psi(l j)``, composed with any dilation already present."""
        return replace(self, l=self.l * l, source="")

    def scale(self, kappa: int) -> PsiFunction:
        return replace(self, kappa=self.kappa * kappa, source="")

    def __str__(self) -> str:
        return format_psi(self)


def eval_psi(f: PsiFunction, j: int) -> float:
    if j < 1:
        raise ValidationError(f"psi is defined on positive integers, got j={j}")
    return f.kappa * f._base(f.l * int(j))


def power(c: float = 1.0, s: float = 1.0) -> PsiFunction:
    return PsiFunction("power", c=c, s=s)


def constant(c: float) -> PsiFunction:
    return PsiFunction("power", c=c, s=0.0)


def check_decay_hypothesis(f: PsiFunction, m: int, n: int, Jmax: int, rtol: float = 1e-12) -> bool:
    """True iff ``j^(m-1) psi(j)^n`` is non-increasing on ``1..Jmax``."""
    prev = math.inf
    for j in range(1, Jmax + 1):
        g = j ** (m - 1) * eval_psi(f, j) ** n
        if g > prev * (1 + rtol):
            return False
        prev = g
    return True


def series_terms(f: PsiFunction, m: int, n: int, Q: int) -> np.ndarray:
    """``terms[j-1] = j^(m-1) psi(j)^n`` for ``j = 1..Q``."""
    return np.array([j ** (m - 1) * eval_psi(f, j) ** n for j in range(1, Q + 1)])


def series_partial_sum(f: PsiFunction, m: int, n: int, Q: int) -> float:
    if Q < 1:
        raise ValidationError(f"Q must be positive, got {Q}")
    return math.fsum(series_terms(f, m, n, Q).tolist())


def series_partial_sums(f: PsiFunction, m: int, n: int, Qs) -> list[float]:
    """Partial sums at each cut-off in ``Qs``, from one pass over the terms."""
    terms = series_terms(f, m, n, max(Qs)).tolist()
    return [math.fsum(terms[:Q]) for Q in Qs]


class ScalingInequalityViolated(PrimapproxError):
    pass


def scaled_series_lower_bound(f: PsiFunction, m: int, n: int, l: int, Q: int) -> float:
    """``l^-m * sum_{j=l}^{Q} j^(m-1) psi(j)^n``, checked against the dilated series.

    For psi meeting the decay hypothesis, the partial sum of ``psi_l`` up to
    ``Q // l`` is at least this value; a violation raises
    :class:`ScalingInequalityViolated`.
    """
    if l < 1:
        raise ValidationError(f"l must be positive, got {l}")
    if l == 1:
        return series_partial_sum(f, m, n, Q)
    tail = math.fsum(series_terms(f, m, n, Q)[l - 1:].tolist())
    bound = tail / l**m
    if Q // l >= 1:
        dilated = series_partial_sum(f.dilate(l), m, n, Q // l)
    else:
        dilated = 0.0
    if dilated < bound * (1 - 1e-12):
        raise ScalingInequalityViolated(
            f"dilated sum {dilated!r} < scaled tail {bound!r} (l={l}, Q={Q})")
    return bound


# --- text form ---------------------------------------------------------------

def parse_psi(text: str, base_dir: Path | None = None) -> PsiFunction:
    """Parse ``power:c=1,s=1.5``, ``logpow:c=1,s=1,t=1`` or ``table:@file.csv``.

    Any kind also accepts ``kappa=`` and ``l=`` parameters.
    """
    text = text.strip()
    if text.startswith("psi="):
        text = text[4:]
    kind, sep, rest = text.partition(":")
    if not sep or kind not in KINDS:
        raise ValidationError(f"cannot parse psi string {text!r}")
    params: dict[str, str] = {}
    table_ref = None
    for tok in filter(None, (t.strip() for t in rest.split(","))):
        if tok.startswith("@"):
            table_ref = tok[1:]
            continue
        key, sep, val = tok.partition("=")
        if not sep:
            raise ValidationError(f"bad psi parameter {tok!r}")
        params[key.strip()] = val.strip()
    unknown = set(params) - {"c", "s", "t", "kappa", "l"}
    if unknown:
        raise ValidationError(f"unknown psi parameters {sorted(unknown)}")
    try:
        kw = {k: float(v) for k, v in params.items() if k in ("c", "s", "t")}
        kappa = int(params.get("kappa", 1))
        l = int(params.get("l", 1))
    except ValueError as exc:
        raise ValidationError(f"non-numeric psi parameter in {text!r}") from exc
    if kind == "table":
        if table_ref is None:
            raise ValidationError("table psi needs @file")
        path = Path(table_ref)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return PsiFunction("table", table=load_table(path), kappa=kappa, l=l,
                           source=text)
    return PsiFunction(kind, kappa=kappa, l=l, source=text, **kw)


def load_table(path: Path) -> tuple[float, ...]:
    """Read one value per row, or ``j,value`` rows with ``j = 1, 2, ...``."""
    if not path.exists():
        raise ValidationError(f"psi table {path} does not exist")
    vals = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            row = [c.strip() for c in row if c.strip()]
            if not row or row[0].startswith("#"):
                continue
            try:
                if len(row) == 1:
                    vals.append(float(row[0]))
                else:
                    j, v = int(row[0]), float(row[1])
                    if j != len(vals) + 1:
                        raise ValidationError(f"psi table rows must be j=1,2,...; got j={j}")
                    vals.append(v)
            except ValueError:
                if not vals:  # header row
                    continue
                raise ValidationError(f"bad psi table row {row}")
    return tuple(vals)


def _num(x: float) -> str:
    return repr(float(x)).removesuffix(".0") if float(x).is_integer() else repr(float(x))


def format_psi(f: PsiFunction) -> str:
    if f.source:
        return f.source
    if f.kind == "table":
        raise ValidationError("a table psi has no text form without its source file")
    parts = [f"c={_num(f.c)}", f"s={_num(f.s)}"]
    if f.kind == "logpow":
        parts.append(f"t={_num(f.t)}")
    if f.kappa != 1:
        parts.append(f"kappa={f.kappa}")
    if f.l != 1:
        parts.append(f"l={f.l}")
    return f"{f.kind}:" + ",".join(parts)


def series_regime(f: PsiFunction, m: int, n: int) -> str:
    """``"divergent"`` or ``"convergent"`` for ``sum_j j^(m-1) psi(j)^n``, decided from the family.

    The series terms behave like ``j^(m-1-s n) log(j)^(-t n)``; a table is
    eventually constant, hence divergent.
    """
    if f.kind == "table":
        return "divergent"
    e = f.s * n - m
    if e < 0 or (e == 0 and (f.kind == "power" or f.t * n <= 1)):
        return "divergent"
    return "convergent"
