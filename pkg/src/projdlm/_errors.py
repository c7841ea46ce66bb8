"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class ProjdlmError(Exception):
    """Base class for package errors."""


class ConfigError(ProjdlmError):
    """Invalid configuration or incompatible option combination."""


class DataError(ProjdlmError):
    """Malformed or inconsistent input data."""


class NumericalError(ProjdlmError):
    """Numerical breakdown (singular covariance, sampler livelock, ...)."""


class DegenerateDirectionError(NumericalError):
    """Resultant vector too short to define a mean direction."""


class KernelDegeneracy(Exception):
    """Internal: compiled kernel hit a case it does not handle.

    Callers fall back to the pure-Python path, which either handles the
    degeneracy or raises a user-facing NumericalError.
    """
