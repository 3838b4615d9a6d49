"""Dual-encoder fake-news classifier with check-worthiness span selection."""

__version__ = "0.1.0"
