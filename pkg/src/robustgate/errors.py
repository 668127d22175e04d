"""Exception hierarchy.

Validation errors are problems with user input (bad coefficients, bad
configuration); numeric errors are failures of a computation on otherwise
valid input. The CLI maps the two families onto distinct exit codes.
"""


class RobustGateError(Exception):
    pass


class ValidationError(RobustGateError, ValueError):
    pass


class NumericError(RobustGateError, ArithmeticError):
    pass


class NonFiniteError(NumericError):
    pass


class NotUnitaryError(NumericError):
    pass


class BranchAmbiguityError(NumericError):
    """Raised when a matrix logarithm sits on (or next to) its branch cut."""


class NotCriticalPointError(NumericError):
    pass


class DegeneratePulseError(NumericError):
    """The Rabi modulation vanishes where a strictly positive value is needed."""
