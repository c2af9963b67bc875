"""Prandtl-Batchelor flows in the unit disk: asymptotic expansion and Navier-Stokes validation."""

__version__ = "0.1.0"
