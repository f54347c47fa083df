"""Numerical laboratory for Ricci-flow singularities of rotationally symmetric spheres."""

__version__ = "0.1.0"
