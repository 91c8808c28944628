"""Miniature structured-grid incompressible LES solver and scaling harness."""

__version__ = "0.1.0"
