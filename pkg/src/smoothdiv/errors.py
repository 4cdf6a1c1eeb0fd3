"""Exception hierarchy shared by all modules."""


class SmoothDivError(Exception):
    """Base class for library errors."""


class ValidationError(SmoothDivError, ValueError):
    pass


class DomainError(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class SigmaMismatch(ValidationError):
    pass


class UnsupportedCoupling(ValidationError):
    pass


class UnsupportedGenerator(ValidationError):
    pass


class SigmaTooLarge(ValidationError):
    pass


class InsufficientReplicates(ValidationError):
    pass


class NumericFailure(SmoothDivError, ArithmeticError):
    pass


class NonFiniteIntegrand(NumericFailure):
    pass


class SingularDensity(NumericFailure):
    pass


class CholeskyFailure(NumericFailure):
    pass
