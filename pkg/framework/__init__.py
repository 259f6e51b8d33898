"""Directional statistics framework: sphere geometry, special functions, kernels and the KDE."""

__version__ = "1.0.0"

__all__ = ["__version__"]
