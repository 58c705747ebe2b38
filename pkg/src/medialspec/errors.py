"""Exception hierarchy shared by all pipeline stages.

Each class carries an ``exit_code`` so the command line front end can map
failures onto distinct process exit statuses.
"""


class MedialError(Exception):
    exit_code = 1


class FormatError(MedialError):
    """Malformed input file. ``line`` is 1-based when known."""

    exit_code = 3

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyInputError(MedialError):
    exit_code = 4


class ShapeError(MedialError):
    exit_code = 5


class DomainError(MedialError):
    exit_code = 6


class PreconditionError(MedialError):
    exit_code = 7


class VoxelizationError(MedialError):
    exit_code = 8


class ConnectivityError(MedialError):
    exit_code = 9


class ConvergenceError(MedialError):
    exit_code = 10


class DataError(MedialError):
    exit_code = 11


class ValidationError(MedialError):
    """Configuration value out of range; ``field`` names the offender."""

    exit_code = 12

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class DependencyError(MedialError):
    exit_code = 13


class FileError(MedialError):
    """Unreadable or unwritable file."""

    exit_code = 14
