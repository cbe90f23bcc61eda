"""Numerical laboratory for accelerating fronts in semilinear wave equations."""

__version__ = "0.1.0"
