"""Algorithms built on the framework core."""

# Don't import submodules here; import directly from the src/ packages:
# from algorithms.mean_shift.src.dms import find_modes

__all__ = []
