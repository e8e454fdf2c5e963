"""Numerical experiments on Diophantine approximation with primitivity constraints."""
from __future__ import annotations

from ._backend import BACKEND
from .errors import BudgetExceeded, OracleMismatch, PrimapproxError, ValidationError
from .partitions import Partition, is_in_P_pi, normalize, parse_partition
from .psi import PsiFunction, parse_psi
from .solver import ProblemInstance, enumerate_solutions, growth_curve, solve

__all__ = [
    "BACKEND", "BudgetExceeded", "OracleMismatch", "PrimapproxError", "ValidationError",
    "Partition", "is_in_P_pi", "normalize", "parse_partition", "PsiFunction", "parse_psi",
    "ProblemInstance", "enumerate_solutions", "growth_curve", "solve",
]
__version__ = "0.1.0"
