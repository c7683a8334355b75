"""Fuchsian analysis and evolution of semilinear wave systems near spatial infinity."""

__version__ = "0.1.0"
