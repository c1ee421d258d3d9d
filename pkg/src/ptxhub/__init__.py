"""Capacity and dispatch optimisation of multi-carrier Power-to-X hubs."""

__version__ = "0.1.0"
