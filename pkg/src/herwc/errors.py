"""Exception types raised across the package."""


class HerwcError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(HerwcError, ValueError):
    """An input violates a documented precondition or type invariant."""


class RelaxationOrderTooLowError(HerwcError, ValueError):
    """A polynomial does not fit in the requested relaxation order."""


class NumericalFailureError(HerwcError, ArithmeticError):
    """A numerical routine broke down (indefinite system, step collapse, ...)."""


class DegenerateMotionError(HerwcError, ValueError):
    """Motions or poses do not constrain the unknown transform."""


class IncompatibleMotionError(HerwcError, ValueError):
    """No quaternion sign makes a motion pair screw-congruent."""


class CombinatorialLimitError(HerwcError, ValueError):
    """An exhaustive search would exceed the configured size cap."""


class ParseError(HerwcError, ValueError):
    """A text document could not be parsed.

    Attributes:
        line: 1-based line number where parsing failed, or None.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
