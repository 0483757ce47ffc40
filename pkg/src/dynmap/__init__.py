"""Learned dynamic maps of visual appearance attributes."""

__version__ = "0.1.0"
