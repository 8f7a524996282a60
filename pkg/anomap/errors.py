"""
Exception types raised by the toolkit.

Everything derives from ValueError so callers that only guard against bad
input keep working; the CLI maps these to exit code 1.
"""

from __future__ import annotations


class AnomapError(ValueError):
    """Base class for invalid input, configuration or data."""


class MvolFormatError(AnomapError):
    """The file does not follow the MVOL layout."""


class BadMagicError(MvolFormatError):
    pass


class UnsupportedVersionError(MvolFormatError):
    pass


class TruncatedPayloadError(MvolFormatError):
    pass


class NonFiniteSampleError(MvolFormatError):
    pass


class ZeroDimensionError(MvolFormatError):
    pass


class MaskPayloadError(MvolFormatError):
    pass


class DimensionMismatchError(AnomapError):
    pass


class SliceIndexError(AnomapError, IndexError):
    pass


class KernelError(AnomapError):
    pass


class IntensityRangeError(AnomapError):
    pass


class EmptySigmaSetError(AnomapError):
    pass


class ThresholdSelectionError(AnomapError):
    pass


class UndefinedDiceError(AnomapError):
    """Both masks are empty, so Dice has no value."""


class LesionPlacementError(AnomapError):
    def __init__(self, index: int, message: str):
        super().__init__(f"lesion {index}: {message}")
        self.index = index


class ConfigError(AnomapError):
    pass
