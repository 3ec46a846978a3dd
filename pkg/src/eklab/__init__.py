"""Transverse instability laboratory for Euler-Korteweg solitary waves."""

__version__ = "0.1.0"
