"""Relevance-based extreme value forecasting toolkit."""

__version__ = "0.1.0"
