"""Shallow domain-adversarial neural networks, baselines and divergence tools."""

__version__ = "0.1.0"
