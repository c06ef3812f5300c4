"""Toolkit for synthesizing, augmenting and detecting sarcastic comment data."""

__version__ = "0.1.0"
