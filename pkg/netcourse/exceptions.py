"""Error hierarchy shared by every netcourse module."""


class NetcourseError(Exception):
    """Base class for all netcourse errors."""


class ParseError(NetcourseError):
    """Malformed input file."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ValidationError(NetcourseError):
    """Input violates a domain invariant."""


class DimensionError(ValidationError):
    """Arrays or index sets do not line up."""


class FittingError(NetcourseError):
    """An estimator could not produce a finite optimum."""


class OracleLimitError(NetcourseError):
    """Brute-force enumeration requested beyond its size limit."""
