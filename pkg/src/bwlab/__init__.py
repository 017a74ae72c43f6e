"""Numerical laboratory for the PT-symmetric cubic oscillator family
H = -hbar^2 d^2/dx^2 + i(x^3 - x): levels, level crossings (square-root
branch points in hbar), eigenfunction zeros, Stokes geometry and WKB."""
from __future__ import annotations

__version__ = "0.1.0"

from .models import ConfigurationError, Family, ModelSpec, potential, scale_map, stationary_points, turning_points

__all__ = [
    "__version__",
    "ConfigurationError",
    "Family",
    "ModelSpec",
    "potential",
    "scale_map",
    "stationary_points",
    "turning_points",
]
