"""Personality-driven generative model of friendship networks."""

__version__ = "0.1.0"
