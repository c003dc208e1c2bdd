"""Panoramic multimodal perception toolkit."""

__version__ = "0.1.0"
