"""Error taxonomy with a stable mapping onto CLI exit codes.

Exit-code contract: 0 success, 2 parse, 3 invariant, 4 usage, 5 connection.
Every error raised by the library derives from IavaError and carries its
exit code, so the CLI can translate any failure without per-site tables.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INVARIANT = 3
EXIT_USAGE = 4
EXIT_CONNECTION = 5


class IavaError(Exception):
    """Base class for all library errors."""

    exit_code = EXIT_INVARIANT


class InvariantError(IavaError):
    """A value violated a documented invariant."""

    exit_code = EXIT_INVARIANT


class EmptyVector(InvariantError):
    """An attention vector had no entries."""


class NonFiniteScore(InvariantError):
    """An attention score was NaN or infinite."""


class LengthMismatch(InvariantError):
    """Paired vectors had different lengths."""


class RankOutOfRange(InvariantError):
    """The rank cutoff i fell outside [0, n]."""


class NonFiniteLogit(InvariantError):
    """A logit was NaN or infinite."""


class DegenerateDistribution(InvariantError):
    """A probability vector had no mass left to sample from."""


class EmptyInput(InvariantError):
    """An evaluation was asked to aggregate zero examples."""


class InvariantViolation(InvariantError):
    """A trace record or protocol reply broke its declared shape."""


class ParseError(IavaError):
    """Malformed trace file or protocol message."""

    exit_code = EXIT_PARSE

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class UsageError(IavaError):
    """Invalid flag combination or argument value."""

    exit_code = EXIT_USAGE


class ConnectionError_(IavaError):
    """Base class for session and transport failures."""

    exit_code = EXIT_CONNECTION


class ConnectFailure(ConnectionError_):
    """The endpoint could not be reached."""


class HandshakeMismatch(ConnectionError_):
    """The peer spoke an unsupported protocol version."""


class SessionFailure(ConnectionError_):
    """A live session failed mid-request."""
