"""Smooth matrix Chernoff bounds, cq soft covering and expander-walk concentration."""

__version__ = "0.1.0"
