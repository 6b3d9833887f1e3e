"""Martingale moderate-deviation toolkit: tilting, tail estimation, coupling
and mixing-sequence experiments."""

__version__ = "0.1.0"
