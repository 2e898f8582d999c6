"""Dependency-to-constituency conversion and a desk-scale RNNG language model."""

__version__ = "0.1.0"
