"""Cochleagram-based noise-adapted speaker identification toolkit."""

__version__ = "0.1.0"
