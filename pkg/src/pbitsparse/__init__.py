"""Sparse p-bit Ising machines: sparsification, sampling and analysis."""

__version__ = "0.1.0"
