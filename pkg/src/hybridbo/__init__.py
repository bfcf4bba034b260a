"""Hybrid mechanistic/data-driven Bayesian optimization toolkit."""

__version__ = "0.1.0"
