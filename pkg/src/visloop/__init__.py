"""Closed-loop visual reasoning over a modifiable scene."""

__version__ = "0.1.0"
