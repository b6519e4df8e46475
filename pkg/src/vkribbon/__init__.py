"""Variational solvers for transversely curved von Karman ribbons and their 1D limits."""

__version__ = "0.1.0"
