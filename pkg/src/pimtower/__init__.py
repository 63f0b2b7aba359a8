"""Exact Markov towers, inducing schemes and measure lifting for piecewise invertible interval maps."""

__version__ = "0.1.0"
