"""Gradient-stable norm surrogates and the online algorithms built on them."""

__version__ = "0.1.0"
