"""Exact finite-depth laboratory for bounded ergodic cocycle construction
over the dyadic tail relation."""

__version__ = "0.1.0"
