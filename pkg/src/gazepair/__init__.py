"""Gaze-based AR device pairing: protocol, simulation and security analysis."""

__version__ = "0.1.0"
