"""Quantum Langevin dynamics and stochastic unraveling of open two-level systems."""

__version__ = "0.1.0"
