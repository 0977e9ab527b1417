"""Alpha-divergence minimization training for neural sequence models."""

__version__ = "0.1.0"
