"""Optimal data splitting between a server and heterogeneous workers."""

__version__ = "0.1.0"
