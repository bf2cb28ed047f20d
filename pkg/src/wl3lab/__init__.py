"""Numerical laboratory for localized Navier-Stokes regularity machinery."""

__version__ = "0.1.0"
