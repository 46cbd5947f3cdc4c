"""Numerical lab for the one-dimensional Anderson-Bernoulli model."""
__version__ = "0.1.0"
