"""Categorical diffusion models whose forward chain is a quantum walk."""

__version__ = "0.1.0"
