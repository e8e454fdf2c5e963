"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class PrimapproxError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PrimapproxError, ValueError):
    """Malformed input: bad partition, bad psi string, inconsistent dimensions."""


class BudgetExceeded(PrimapproxError):
    """An enumeration or sampling request exceeds the configured work budget."""


class OracleMismatch(PrimapproxError):
    """A built-in cross-check between two independent computations disagreed."""
