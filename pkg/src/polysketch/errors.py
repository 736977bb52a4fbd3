"""Exception hierarchy shared across the package."""


class PolySketchError(Exception):
    """Base class for all package errors."""


class DimensionError(PolySketchError, ValueError):
    """Array shapes do not agree."""


class NotSymmetricError(PolySketchError, ValueError):
    pass


class SingularSystemError(PolySketchError, ArithmeticError):
    """A linear system could not be solved, even with diagonal jitter."""


class NumericalRangeError(PolySketchError, ArithmeticError):
    """Power sums overflowed; switch to the Chebyshev basis."""


class ConvergenceError(PolySketchError, RuntimeError):
    pass


class PositivityError(PolySketchError, ArithmeticError):
    """A Sinkhorn scaling vector stopped being finite and positive."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DataError(PolySketchError, ValueError):
    """Input file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
