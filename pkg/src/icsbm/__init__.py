"""Incipient infinite branching structures and super-Brownian moment measures."""

__version__ = "0.1.0"
