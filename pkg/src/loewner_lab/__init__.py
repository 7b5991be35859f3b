"""Lattice interfaces, Loewner chains and crossing estimates."""

__version__ = "0.1.0"
