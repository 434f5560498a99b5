"""Exception hierarchy shared by all modules."""


class LavrentievError(Exception):
    """Base class for errors raised by this package."""


class InvalidParameter(LavrentievError, ValueError):
    """A scalar parameter is outside its admissible range."""


class IncompatibleGrids(LavrentievError, ValueError):
    """Two signals or a signal and an operator live on different grids."""


class UnsupportedKernel(LavrentievError, ValueError):
    """The kernel cannot be handled by the requested solver path."""


class SolverFailure(LavrentievError, RuntimeError):
    """A solver could not produce a solution; ``trace`` holds diagnostics."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NumericFailure(LavrentievError, RuntimeError):
    """A numerical procedure did not reach its requested accuracy."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved
