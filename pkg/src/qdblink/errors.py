"""Exception types shared across the toolkit.

The split mirrors the exit-code contract of the command line tools:
validation problems (bad inputs, bad config) map to exit code 2,
numerical failures (non-converging fits, degenerate data) to 3 and
I/O problems to 4.
"""


class ValidationError(ValueError):
    """Invalid argument, configuration key or file content."""


class NumericsError(RuntimeError):
    """A numerical procedure failed (non-convergence, degenerate data)."""


class FitConvergenceError(NumericsError):
    """Least-squares fit did not converge; carries the last iterate."""

    def __init__(self, message, last_result=None):
        super().__init__(message)
        self.last_result = last_result


class NoBunchingError(NumericsError):
    """Correlation data shows no bunching amplitude to fit."""


class MleConvergenceError(NumericsError):
    """Likelihood maximisation hit the iteration cap; carries the last iterate."""

    def __init__(self, message, last_result=None):
        super().__init__(message)
        self.last_result = last_result
