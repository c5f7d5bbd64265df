"""Numerical laboratory for the coupled Einstein-Yang-Mills system and its
deformation theory on discretized flat tori."""

__version__ = "0.1.0"
