"""Isometric embedding laboratory for 2-sphere metrics in curved backgrounds."""

__version__ = "0.1.0"
