"""Emotion-conditioned multi-track composition with genetic algorithms."""

__version__ = "0.1.0"
