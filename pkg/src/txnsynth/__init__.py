"""Synthetic credit-card spend profiles: simulator, generative models, utility metrics."""

__version__ = "0.1.0"
