"""Weakly-supervised clip training with adaptive action and clip focusing."""

__version__ = "0.1.0"
