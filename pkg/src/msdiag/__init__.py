"""Validated two-group classification of binned mass spectra."""

__version__ = "0.1.0"
