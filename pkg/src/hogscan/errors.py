"""
Exception hierarchy for hogscan.

Every error derives from ValueError as well, so callers that only know about
bad-input ValueErrors keep working.
"""

from __future__ import annotations


class HogscanError(Exception):
    """Base class for all hogscan failures."""


class DecodeError(HogscanError, ValueError):
    """An image stream could not be decoded."""


class ParameterError(HogscanError, ValueError):
    """A numeric parameter is outside its valid range."""


class DimensionError(HogscanError, ValueError):
    """An image, region or vector has the wrong size."""


class ConfigError(HogscanError, ValueError):
    """A configuration value or key-value block is invalid."""


class TrainingError(HogscanError, ValueError):
    """The training set cannot produce a model."""


class ModelFormatError(HogscanError, ValueError):
    """A model file is malformed or internally inconsistent."""


class AnnotationError(HogscanError, ValueError):
    """An annotation file line cannot be parsed."""

    def __init__(self, message: str, line_number: int) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number
