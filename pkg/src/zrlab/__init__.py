"""Numerical laboratory for the non-equilibrium stationary state of the
boundary-driven zero-range process with long jumps."""

__version__ = "0.1.0"
