"""Retrieval-augmented language modeling with a visual knowledge fusion layer."""

__version__ = "0.1.0"
