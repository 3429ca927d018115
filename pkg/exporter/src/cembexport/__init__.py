"""Batch exporter for transformer token embeddings in the CEMB format."""

__version__ = "0.1.0"
