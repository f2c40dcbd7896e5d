"""Differential angular imaging and two-stream material recognition networks."""
__version__ = "0.1.0"
