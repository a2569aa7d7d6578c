"""Plotting companion for pathforge experiment output."""

__version__ = "0.1.0"
