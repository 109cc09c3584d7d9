"""Render bpg-lab CSV results into accuracy panels and learning-curve figures."""

__version__ = "0.1.0"
