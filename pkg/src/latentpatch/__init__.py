"""Gradient-free adversarial-patch search in a generator's latent space."""

__version__ = "0.1.0"
