"""Generative bridging network training framework."""

__version__ = "1.0.0"
