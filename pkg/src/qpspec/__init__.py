"""Spectral theory toolkit for quasi-periodic Schrodinger operators."""

__version__ = "0.1.0"
