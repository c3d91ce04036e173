"""Temporal conformal prediction intervals for financial return series."""

__version__ = "0.1.0"
