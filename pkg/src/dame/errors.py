"""Exception types shared across the package.

Each class maps to one CLI exit code so failures can be told apart in
scripts: configuration problems (2), data problems (3), numerical
failures while sampling (4).
"""


class DameError(Exception):
    """Base class for package errors."""


class ConfigError(DameError):
    """Invalid or inconsistent run configuration."""

    exit_code = 2


class DataError(DameError):
    """Malformed or internally inconsistent input data."""

    exit_code = 3


class NumericalError(DameError):
    """Numerical failure (factorization breakdown, non-finite state)."""

    exit_code = 4
