"""Exception and warning types shared across closurekit."""


class ClosureKitError(Exception):
    """Base class for all closurekit errors."""


class NonFiniteState(ClosureKitError, FloatingPointError):
    """A time integration produced a non-finite or runaway state.

    Attributes
    ----------
    step : int
        Index of the step whose *result* failed the check.
    partial : object
        Whatever the integrator had produced before failing (may be None).
    """

    def __init__(self, message, step=None, partial=None):
        super().__init__(message)
        self.step = step
        self.partial = partial


class InvalidGrid(ClosureKitError, ValueError):
    pass


class EmptySplit(ClosureKitError, ValueError):
    pass


class IndexUnderflow(ClosureKitError, IndexError):
    pass


class IndexOverflow(ClosureKitError, IndexError):
    pass


class NotConverged(ClosureKitError, RuntimeError):
    """Raised by strict solvers; ``coef`` holds the best iterate."""

    def __init__(self, message, coef=None, n_iter=None):
        super().__init__(message)
        self.coef = coef
        self.n_iter = n_iter


class InvalidDims(ClosureKitError, ValueError):
    pass


class NonFiniteLoss(ClosureKitError, FloatingPointError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class RankDeficientGamma(ClosureKitError, ArithmeticError):
    def __init__(self, message, rank=None, required=None):
        super().__init__(message)
        self.rank = rank
        self.required = required


class TooFewVectors(ClosureKitError, ValueError):
    pass


class DegenerateScaling(ClosureKitError, ValueError):
    pass


class InsufficientNeighbors(ClosureKitError, ValueError):
    pass


class ConfigError(ClosureKitError, ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


class DegenerateColumnWarning(UserWarning):
    pass


class RankDeficientWarning(UserWarning):
    pass


class NoMinimumWarning(UserWarning):
    pass
