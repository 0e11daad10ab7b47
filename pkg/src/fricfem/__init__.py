"""Adaptive FEM for frictional contact with equilibrated-stress error control."""

__version__ = "0.1.0"
