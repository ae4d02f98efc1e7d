"""Dual-arm collision-aware planning over a learned latent roadmap."""

__version__ = "0.1.0"
