"""Orthobell - numerics lab for Bellman functions and orthogonal-martingale subordination constants."""

__version__ = "0.1.0"
