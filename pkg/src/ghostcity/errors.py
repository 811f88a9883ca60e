"""Exception hierarchy shared by every stage.

The CLI maps each family onto a process exit status, so library code
raises these instead of bare ``ValueError``/``OSError`` where the
distinction matters to callers.
"""


class GhostCityError(Exception):
    """Base class for all package errors."""

    exit_code = 3
    kind = "internal"


class ParameterError(GhostCityError, ValueError):
    """A parameter or configuration value is outside its allowed bounds."""

    exit_code = 1
    kind = "parameter"


class ValidationError(GhostCityError, ValueError):
    """Inputs are individually valid but inconsistent with each other."""

    exit_code = 1
    kind = "validation"


class AlignmentError(ValidationError):
    """Two date-indexed series do not share the dates an operation needs."""

    kind = "alignment"


class ParseError(GhostCityError, ValueError):
    """A malformed input row was met in strict mode."""

    exit_code = 1
    kind = "parse"

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class InvariantError(GhostCityError, AssertionError):
    """An internal consistency check failed; indicates a bug."""

    exit_code = 3
    kind = "invariant"
