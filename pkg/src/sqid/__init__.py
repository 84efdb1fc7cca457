"""Compressed signatures for quadratic similarity queries with zero false negatives."""

__version__ = "0.1.0"
