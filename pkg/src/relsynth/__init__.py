"""Synthetic relational database generation: block-model structure sampling plus graph-conditioned mixed-type diffusion."""

__version__ = "0.1.0"
