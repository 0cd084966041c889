"""Numerical laboratory for a harmonic chain with momentum-exchanging noise."""

__version__ = "0.1.0"
