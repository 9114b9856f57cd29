"""Offline multi-objective optimization with guided flow matching."""

__version__ = "0.1.0"
