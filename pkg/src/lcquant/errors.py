"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes (see cli.EXIT_CODES).
"""


class LcquantError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(LcquantError):
    """Invalid run configuration: unknown keys, bad values, layout mismatches."""


class DataFormatError(LcquantError):
    """Malformed input file: bad magic, truncation, count mismatch."""


class NumericalError(LcquantError):
    """Numerical failure: singular system, divergent training."""


class DivergenceError(NumericalError):
    """An outer compression run aborted on a non-finite loss.

    Carries the trace recorded up to the failing iteration so the caller
    can inspect what happened.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
