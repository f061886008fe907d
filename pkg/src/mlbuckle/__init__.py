"""Structured-grid topology optimization with multilevel linearized buckling analysis."""

__version__ = "0.1.0"
