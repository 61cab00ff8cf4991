"""Exponential dichotomies, weighted admissibility and Lipschitz shadowing for discrete cocycles."""

__version__ = "0.1.0"
