"""Hierarchical conditional latent diffusion for proteins."""

__version__ = "0.1.0"
