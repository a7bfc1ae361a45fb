"""Quantum-safe 5G core security constructions."""

__version__ = "0.1.0"
