"""Exact qubit reduction of QAOA through invariant subspaces."""

__version__ = "0.1.0"
