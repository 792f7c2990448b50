"""Desk-scale audio-visual instruction-tuned language model."""

__version__ = "0.1.0"
