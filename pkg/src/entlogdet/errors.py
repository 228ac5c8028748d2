"""Exception types raised across the package."""


class ContractError(ValueError):
    """An argument violates a documented precondition (shape, range, kind)."""


class MatrixMarketError(ValueError):
    """A Matrix Market file could not be parsed.

    ``lineno`` is the 1-based line of the offending input, or ``None`` when
    the problem is not tied to a single line (e.g. a short file).
    """

    def __init__(self, msg, lineno=None):
        if lineno is not None:
            msg = f"line {lineno}: {msg}"
        super().__init__(msg)
        self.lineno = lineno


class UnsupportedFormatError(MatrixMarketError):
    """Valid Matrix Market header, but a format/field/symmetry we do not read."""


class SymmetryError(ValueError):
    """A matrix that must be symmetric is not."""


class NotPositiveDefiniteError(ValueError):
    """Cholesky factorisation hit a non-positive pivot.

    ``pivot`` is the 0-based index of the failing leading minor.
    """

    def __init__(self, pivot):
        super().__init__(f"matrix is not positive definite (pivot {pivot} failed)")
        self.pivot = pivot


class NumericalFailure(ArithmeticError):
    """NaN or overflow appeared during a computation."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class ConstraintDomainError(ContractError):
    """Moment constraints outside the admissible range for the density fit."""
