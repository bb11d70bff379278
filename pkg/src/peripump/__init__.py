"""Boundary-integral shape optimization of 2D peristaltic pumps carrying a rigid particle."""

__version__ = "0.1.0"
