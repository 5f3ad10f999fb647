"""Numerical laboratory for micro-instability near resonances of
near-integrable Hamiltonian systems."""

__version__ = "0.1.0"
