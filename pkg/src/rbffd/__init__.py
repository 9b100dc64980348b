"""Adaptive meshless RBF-FD solver for 2D elliptic Dirichlet problems."""

__version__ = "0.1.0"
