"""Procedural synthetic city generation for aerial segmentation datasets."""

__version__ = "0.1.0"
