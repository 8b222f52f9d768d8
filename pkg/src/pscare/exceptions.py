"""Exception hierarchy.

Input problems (bad arguments, malformed files) map to CLI exit code 1,
numerical failures to exit code 2.
"""


class PscareError(Exception):
    """Base class for all library errors."""


class InputError(PscareError, ValueError):
    """Invalid argument, dataset or configuration."""


class ParseError(InputError):
    """Malformed CSV/JSON input; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IdentifiabilityError(InputError):
    """The covariate design matrix W = [1 | Z] is rank deficient."""


class NumericalError(PscareError):
    """Internal numerical failure that is not the caller's fault."""
