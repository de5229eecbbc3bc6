"""Approximate logic synthesis driven by switching power under an output error-rate budget."""

__version__ = "0.1.0"
