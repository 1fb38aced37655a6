"""Exception hierarchy.

Errors split into two families so callers (and the command line) can tell bad
input apart from a numerical failure on valid input.
"""


class MjlsError(Exception):
    """Base class for every error raised by this package."""


class InputError(MjlsError, ValueError):
    """Malformed or inconsistent input data."""


class NumericalError(MjlsError, ArithmeticError):
    """Valid input on which a numerical procedure failed."""


class DimensionMismatch(InputError):
    pass


class NotStochastic(InputError):
    pass


class WeightNotPD(InputError):
    pass


class WeightNotPSD(InputError):
    pass


class NotSymmetric(InputError):
    pass


class NotErgodic(InputError):
    pass


class InsufficientSamples(InputError):
    pass


class NonFiniteState(NumericalError):
    """State norm crossed the overflow guard (closed loop is unstable)."""


class SingularMatrix(NumericalError):
    pass


class SingularBlock(NumericalError):
    """Input-input block of an estimated kernel is not positive definite."""


class RankDeficient(NumericalError):
    """Regressor matrix lost column rank (persistent excitation violated)."""


class ModeStarvation(NumericalError):
    """Collection budget ran out before every mode had enough samples."""


class NoConvergence(NumericalError):
    """Iteration cap reached before the stopping test was met.

    ``result`` carries whatever partial output the failing routine produced.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class PoorExcitationWarning(UserWarning):
    """Regressor condition number is above the persistent-excitation threshold."""
