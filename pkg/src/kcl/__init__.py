"""Keyword-weight-aware curriculum learning for multi-domain text classification."""

__version__ = "0.1.0"
