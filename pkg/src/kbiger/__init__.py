"""Iterative instruction generation and graph reasoning for multi-hop KBQA."""

__version__ = "0.1.0"
