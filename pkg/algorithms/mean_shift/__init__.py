"""Directional mean shift: the iteration, its EM reading and its convergence diagnostics."""

__all__ = []
