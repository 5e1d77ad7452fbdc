"""Ranking-manipulation lab for generative engines."""

__version__ = "0.1.0"
