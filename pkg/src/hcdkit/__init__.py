"""Hierarchical collaborative downscaling on a small, self-trained rescaling chain."""

__version__ = "0.1.0"
