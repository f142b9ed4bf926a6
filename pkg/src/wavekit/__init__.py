"""Numerical toolkit for uncertainty relations, wave packets and slit experiments."""

__version__ = "0.1.0"
