"""Reconstruction of symmetric 2-tensor fields in the plane from V-line and star transforms."""

__version__ = "0.1.0"
