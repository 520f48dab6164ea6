"""Learnable functional brain networks: encoder, graph generator, GCN predictor and analyses."""

__version__ = "0.1.0"
