"""Simulation toolkit for deletion channels against locally decodable codes."""

__version__ = "0.1.0"
