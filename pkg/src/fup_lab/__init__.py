"""Numerical laboratory for regular sets and fractal uncertainty bounds."""

__version__ = "0.1.0"
