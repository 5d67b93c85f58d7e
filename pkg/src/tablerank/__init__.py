"""Semantic table retrieval: lexical, feature-based, and semantic rankers."""

__version__ = "0.1.0"
