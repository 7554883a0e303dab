"""Rigid-body contact simulation with geometrically implicit equivalent contact points."""

__version__ = "0.1.0"
