"""Fredholm-determinant identities for Schrödinger operators: half-line Jost
functions, modal disk and ball geometry, finite-rank nonlocal potentials."""

__version__ = "0.1.0"
