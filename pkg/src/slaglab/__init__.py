"""Numerical laboratory for flux coordinates on moduli of constrained Lagrangians."""

__version__ = "0.1.0"
