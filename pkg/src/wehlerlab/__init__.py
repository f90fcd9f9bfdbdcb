"""Numerical experiments on random dynamics of Wehler K3 surfaces."""

__version__ = "0.1.0"
