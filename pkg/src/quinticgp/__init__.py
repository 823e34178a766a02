"""Combinatorics and numerics for the quintic Gross-Pitaevskii / Hartree hierarchy."""

__version__ = "0.1.0"
