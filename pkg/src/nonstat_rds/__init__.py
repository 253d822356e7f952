"""Simulation and verification toolkit for non-stationary random dynamical systems."""

__version__ = "0.1.0"
