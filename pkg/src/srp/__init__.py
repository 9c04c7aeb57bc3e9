"""Spatial random permutations on finite graphs: exact enumeration, samplers and verification harnesses."""

__version__ = "0.1.0"
