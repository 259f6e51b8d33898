"""Directional kernel profiles.

A profile L maps r = kappa * (1 - x^T X_i) >= 0 to a non-negative weight. The
mean shift ascent guarantees need L non-increasing and convex on [0, inf).
Each concrete kernel overrides the `_eval` / `_deriv` / `_deriv2` hooks, the
same way concrete operators override the base operator's hooks.
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Union

import numpy as np

from .errors import ConfigError, NegativeArgumentError, UnsupportedKernelError

Scalar = Union[float, np.ndarray]


class KernelKind(Enum):
    VON_MISES = "von_mises"
    TRUNCATED_CONVEX = "truncated"


def _as_r(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise NegativeArgumentError(f"Kernel profiles are defined on r >= 0, got min {r.min()}")
    return r


def _out(values: np.ndarray) -> Scalar:
    return float(values) if values.ndim == 0 else values


class Kernel:
    """Base profile. Subclasses implement the underscore hooks on arrays of r >= 0."""

    kind: KernelKind

    @property
    def support_bound(self) -> float:
        """r beyond which L vanishes identically."""
        return np.inf

    @property
    def twice_differentiable(self) -> bool:
        return True

    @property
    def spec(self) -> str:
        raise NotImplementedError

    def _eval(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _deriv(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _deriv2(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _log_eval(self, r: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self._eval(r))

    def eval(self, r) -> Scalar:
        return _out(self._eval(_as_r(r)))

    def deriv(self, r) -> Scalar:
        return _out(self._deriv(_as_r(r)))

    def deriv2(self, r) -> Scalar:
        return _out(self._deriv2(_as_r(r)))

    def log_eval(self, r) -> Scalar:
        """log L(r); -inf outside the support."""
        return _out(self._log_eval(_as_r(r)))

    def closed_form_log_norm(self, kappa: float, dim: int) -> Optional[float]:
        """log normaliser on the dim-sphere when known analytically, else None."""
        return None

    def require_twice_differentiable(self, operation: str) -> None:
        if not self.twice_differentiable:
            raise UnsupportedKernelError(f"{operation} needs a twice differentiable kernel, got {self.spec}")

    def validate(self, r_max: float = 4.0, points: int = 401) -> List[str]:
        """Spot-check positivity, monotonicity and convexity on a grid; returns issues."""
        issues = []
        r = np.linspace(0.0, r_max, points)
        values = self._eval(r)
        if not 0.0 < values[0] < np.inf:
            issues.append(f"L(0) = {values[0]} is not in (0, inf)")
        if np.any(values < 0):
            issues.append("L takes negative values")
        if np.any(np.diff(values) > 1e-15):
            issues.append("L is not non-increasing")
        if np.any(np.diff(values, 2) < -1e-12):
            issues.append("L is not convex")
        return issues

    def __str__(self) -> str:
        return self.spec


@dataclass(frozen=True)
class VonMisesKernel(Kernel):
    """L(r) = exp(-r); the KDE becomes a mixture of von Mises-Fisher densities."""

    kind = KernelKind.VON_MISES

    @property
    def spec(self) -> str:
        return "von_mises"

    def _eval(self, r):
        return np.exp(-r)

    def _deriv(self, r):
        return -np.exp(-r)

    def _deriv2(self, r):
        return np.exp(-r)

    def _log_eval(self, r):
        return -r

    def closed_form_log_norm(self, kappa: float, dim: int) -> Optional[float]:
        from .special_fn import log_vmf_norm_const

        return float(kappa + log_vmf_norm_const(dim, kappa))


@dataclass(frozen=True)
class TruncatedConvexKernel(Kernel):
    """L(r) = (1 - r)^p on [0, 1], zero beyond.

    At the kink r = 1 the derivative is the right-sided subgradient 0, so points
    exactly on the support boundary exert no pull.
    """

    p: int = 2
    kind = KernelKind.TRUNCATED_CONVEX

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise UnsupportedKernelError(f"Truncated kernel needs an integer p >= 1, got {self.p}")

    @property
    def support_bound(self) -> float:
        return 1.0

    @property
    def twice_differentiable(self) -> bool:
        return self.p >= 2

    @property
    def spec(self) -> str:
        return f"truncated:p={self.p}"

    def _eval(self, r):
        inside = r <= 1.0
        return np.where(inside, np.clip(1.0 - r, 0.0, None) ** self.p, 0.0)

    def _deriv(self, r):
        base = np.clip(1.0 - r, 0.0, None)
        return np.where(r < 1.0, -self.p * base ** (self.p - 1), 0.0)

    def _deriv2(self, r):
        if self.p == 1:
            return np.zeros_like(r)
        base = np.clip(1.0 - r, 0.0, None)
        return np.where(r <= 1.0, self.p * (self.p - 1) * base ** (self.p - 2), 0.0)

    def _log_eval(self, r):
        with np.errstate(divide="ignore"):
            return np.where(r < 1.0, self.p * np.log(np.clip(1.0 - r, 1e-300, None)), -np.inf)


def parse_kernel(spec: Union[str, Kernel]) -> Kernel:
    """Kernel from its config string: "von_mises" or "truncated:p=<int>"."""
    if isinstance(spec, Kernel):
        return spec
    text = str(spec).strip().lower()
    if text in ("von_mises", "vonmises", "vmf"):
        return VonMisesKernel()
    if text.startswith("truncated"):
        _, _, params = text.partition(":")
        if not params:
            return TruncatedConvexKernel()
        key, _, value = params.partition("=")
        if key.strip() != "p":
            raise ConfigError(f"Unknown truncated kernel parameter {key!r} in {spec!r}")
        try:
            p = int(value)
        except ValueError:
            raise ConfigError(f"Truncated kernel exponent must be an integer, got {value!r}") from None
        return TruncatedConvexKernel(p=p)
    raise ConfigError(f"Unknown kernel {spec!r}; expected 'von_mises' or 'truncated:p=<int>'")
