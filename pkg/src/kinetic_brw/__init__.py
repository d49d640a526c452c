"""Branching-random-walk Monte Carlo for kinetic-type equations in Fourier space."""

__version__ = "0.1.0"
