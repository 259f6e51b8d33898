"""Exception hierarchy for the directional mean shift framework.

Every failure the library raises derives from DirectionalStatsError and also from
the closest builtin, so callers may catch either.
"""


class DirectionalStatsError(Exception):
    """Base class for all library errors."""


# Geometry

class ZeroVectorError(DirectionalStatsError, ValueError):
    """A vector with (numerically) zero norm cannot be projected onto the sphere."""


class DimensionMismatchError(DirectionalStatsError, ValueError):
    """Operands live on spheres of different dimension."""


class UnsupportedDimensionError(DirectionalStatsError, ValueError):
    """The operation is only defined for a particular sphere dimension."""


# Special functions

class BesselOverflowError(DirectionalStatsError, OverflowError):
    """I_v(x) is not representable; use the log-space variant."""


class QuadratureFailureError(DirectionalStatsError, ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance."""


class DomainError(DirectionalStatsError, ValueError):
    """Argument outside the domain of a function (e.g. A >= 1 for the kappa inverse)."""


# Kernels and KDE

class NegativeArgumentError(DirectionalStatsError, ValueError):
    """Kernel profiles are only defined on r >= 0."""


class UnsupportedKernelError(DirectionalStatsError, ValueError):
    """The kernel lacks the smoothness required by the operation."""


# Mean shift

class DegenerateStepError(DirectionalStatsError, ArithmeticError):
    """The mean shift numerator vanished; the update is undefined."""


class NoConvergedTrajectoryError(DirectionalStatsError, RuntimeError):
    """No starting point produced a converged trajectory."""


class AscentViolationError(DirectionalStatsError, AssertionError):
    """Density decreased along a mean shift trajectory beyond the allowed slack."""


# EM view

class AllZeroError(DirectionalStatsError, ArithmeticError):
    """Every mixture component density vanished at the query point."""


class InnerDivergenceError(DirectionalStatsError, RuntimeError):
    """The exact M-step inner fixed point did not settle within max_inner iterations."""


class EmptyComponentError(DirectionalStatsError, RuntimeError):
    """A mixture component lost all responsibility mass."""


# Diagnostics

class ZeroGradientError(DirectionalStatsError, ArithmeticError):
    """The KDE gradient vanished, so the iteration map is not differentiable."""


class InsufficientIterationsError(DirectionalStatsError, ValueError):
    """Too few usable iterates to estimate a convergence rate."""


# Input / configuration

class ConfigError(DirectionalStatsError, ValueError):
    """Run configuration or mixture specification is invalid."""


class ParseError(DirectionalStatsError, ValueError):
    """A dataset row could not be parsed."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyFileError(DirectionalStatsError, ValueError):
    """The dataset file contains no data rows."""
