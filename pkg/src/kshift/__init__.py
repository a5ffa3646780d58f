"""Continuous CT reconstruction-kernel conversion with a switchable generator."""

__version__ = "0.1.0"
