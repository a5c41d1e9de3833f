"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, InternalError (and anything unexpected) -> 4.
"""


class PeersignError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(PeersignError):
    """Invalid configuration: bad parameter values, unknown keys, missing paths."""


class DataError(PeersignError):
    """Problem with input data (unreadable, empty, malformed)."""


class ParseError(DataError):
    """Malformed input line; carries the 1-based line number when known."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class InternalError(PeersignError):
    """An invariant that must hold by construction was violated."""
