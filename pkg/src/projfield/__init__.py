"""Discretized free scalar fields and checks of their projective consistency."""

__version__ = "0.1.0"
