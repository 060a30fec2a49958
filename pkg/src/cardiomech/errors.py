"""Exception hierarchy for CardioMech.

Validation problems (bad inputs, mismatched grids, malformed files or
configuration) derive from :class:`ValidationError`; numerical failures during
optimization derive from :class:`NumericalError`. The command-line interface
maps the two families onto distinct exit codes.
"""

from __future__ import annotations


class CardioMechError(Exception):
    """Base class for all CardioMech errors."""


class ValidationError(CardioMechError, ValueError):
    """Raised when inputs violate a documented precondition."""


class GridMismatchError(ValidationError):
    """Raised when two containers that must share a voxel grid do not."""


class ConfigError(ValidationError):
    """Raised for malformed configuration documents or unknown keys."""


class VolumeFormatError(ValidationError):
    """Base class for volume file format problems."""


class HeaderError(VolumeFormatError):
    """Raised when a volume header is malformed or violates a schema rule."""


class TruncatedPayloadError(VolumeFormatError):
    """Raised when a volume payload is shorter or longer than its header says.

    :param expected: Payload size in bytes announced by the header.
    :param actual: Payload size in bytes found in the file.
    """

    def __init__(self, expected: int, actual: int) -> None:
        """Create the error with the two sizes in its message.

        :param expected: Payload size in bytes announced by the header.
        :param actual: Payload size in bytes found in the file.
        :returns: None
        """
        super().__init__(
            f"payload size mismatch: expected {expected} bytes, found {actual}"
        )
        self.expected = expected
        self.actual = actual


class UnknownElementTypeError(VolumeFormatError):
    """Raised when a volume header names an unsupported ElementType."""


class NumericalError(CardioMechError, ArithmeticError):
    """Raised when a computation produces non-finite values."""


__all__ = [
    "CardioMechError",
    "ConfigError",
    "GridMismatchError",
    "HeaderError",
    "NumericalError",
    "TruncatedPayloadError",
    "UnknownElementTypeError",
    "ValidationError",
    "VolumeFormatError",
]
