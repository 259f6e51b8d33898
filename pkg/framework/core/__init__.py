"""Core building blocks shared by every algorithm."""

# Import directly from the submodules: from framework.core.kde import KdeModel

__all__ = []
