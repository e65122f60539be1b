"""Planetoid -> portable dataset format converter."""

from .convert import (
    DATASETS,
    EXPECTED_COUNTS,
    ConversionError,
    ConversionManifest,
    convert,
)

__version__ = "0.1.0"
