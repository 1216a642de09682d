"""Exception types shared across the package."""


class SpecalignError(Exception):
    """Base class for all package errors."""


class DimensionError(SpecalignError, ValueError):
    """Operands have incompatible or invalid shapes."""


class ParameterError(SpecalignError, ValueError):
    """A hyperparameter or argument is outside its valid range."""


class DegenerateInputError(SpecalignError, ValueError):
    """Input is structurally valid but degenerate (zero norm, isolated vertex, ...)."""


class NumericalError(SpecalignError, ArithmeticError):
    """An iterative routine failed to converge or produced non-finite values."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularMatrixError(NumericalError):
    """A linear solve hit a pivot below the singularity threshold."""


class CapacityError(SpecalignError, ValueError):
    """Not enough samples/entries to satisfy the request."""


class ParseError(SpecalignError, ValueError):
    """A text input failed to parse; carries the offending line number."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class SchemaError(SpecalignError, ValueError):
    """A structured file does not match the expected schema."""
