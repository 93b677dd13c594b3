"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shapes or dimensions of the inputs do not agree."""


class SingularOperatorError(ValueError):
    """An operator that must be invertible (or positive definite) is not."""

    def __init__(self, message: str, smallest_eigenvalue: float | None = None):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue


class SpecError(ValueError):
    """A problem specification violates one of its invariants."""


class SchemeError(ValueError):
    """A sampling scheme is invalid for the given problem."""


class DataFormatError(ValueError):
    """An input data file cannot be parsed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
