"""Exception hierarchy.

Two families: :class:`ValidationError` for bad inputs or unmet
preconditions, :class:`NumericalError` for computations that could not be
carried out reliably.  The CLI maps them to exit codes 1 and 2.
"""


class NodalLabError(Exception):
    pass


class ValidationError(NodalLabError, ValueError):
    pass


class NumericalError(NodalLabError, ArithmeticError):
    pass


class NotRepresentable(ValidationError):
    """m is not a sum of two squares."""


class UnsupportedOrder(ValidationError):
    pass


class InvalidTheta(ValidationError):
    pass


class AsymmetricMeasure(ValidationError):
    """An atom has no antipode, so no real field can carry the measure."""


class AngleOutOfBand(ValidationError):
    pass


class NotDegenerate(ValidationError):
    pass


class UnsupportedDirection(ValidationError):
    pass


class Tie(ValidationError):
    """The two squared amplitudes of a Cilleruelo sample coincide."""


class NoAtom(ValidationError):
    pass


class NotCillerueloType(ValidationError):
    pass


class RegimeViolation(ValidationError):
    pass


class DegenerateCovariance(NumericalError):
    pass


class SingularAtZero(NumericalError):
    pass


class QuadratureFailure(NumericalError):
    pass


class SampleError(NodalLabError):
    """Wraps a failure raised while processing one Monte Carlo sample."""

    def __init__(self, index, cause):
        super().__init__(f"sample {index}: {cause}")
        self.index = index
        self.cause = cause
