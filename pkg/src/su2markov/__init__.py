"""Markov chains and switching diffusions on [0, 1] from matrix-valued spherical functions."""

__version__ = "0.1.0"
