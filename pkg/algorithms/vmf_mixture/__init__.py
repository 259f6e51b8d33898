"""Mixtures of von Mises-Fisher distributions."""

__all__ = []
