"""Exception types raised across the package."""


class NonclassicalError(Exception):
    """Base class for all package errors."""


class PreconditionError(NonclassicalError, ValueError):
    """An operation was called with arguments violating its contract."""


class OrderTooLarge(PreconditionError):
    pass


class InsufficientCuts(PreconditionError):
    pass


class RankDeficient(PreconditionError):
    pass


class CutMismatch(PreconditionError):
    pass


class InsufficientSamples(PreconditionError):
    pass


class UnknownDistribution(PreconditionError):
    pass


class NonConvergence(NonclassicalError, RuntimeError):
    """An iterative numerical procedure exhausted its budget."""
