"""Paraphrase-representation pretraining, learned text scoring and one-shot generation."""

__version__ = "0.1.0"
