"""Episodic constrained policy optimisation with quadratic damping."""

__version__ = "0.1.0"
