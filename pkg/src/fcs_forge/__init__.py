"""Harmonize historical monetary amounts and multiply impute missing values."""

__version__ = "0.1.0"
