"""Exception hierarchy shared across the toolkit.

DataError covers malformed or inconsistent inputs (files, frames, tables);
DomainError covers requests outside the mathematical/physical domain of an
operation (out-of-workspace IK, fixed-point overflow, unreachable rewards).
The CLI maps DataError to exit code 3 and DomainError to exit code 4.
"""


class MicrogaitError(Exception):
    """Base class for all toolkit errors."""


class DataError(MicrogaitError):
    """Malformed or inconsistent input data."""


class DomainError(MicrogaitError):
    """Input is valid data but outside the operation's domain."""


class ProtocolError(DataError):
    """Wire-codec framing or session violation."""
