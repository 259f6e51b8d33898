"""Bessel functions, sphere areas and the normalising constants of directional kernels.

All normalisers are evaluated in log space through the exponentially scaled
Bessel function, so concentrations of several hundred stay finite.
"""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import integrate, optimize, special

from .errors import BesselOverflowError, DomainError, QuadratureFailureError

if TYPE_CHECKING:
    from .kernels import Kernel

logger = logging.getLogger(__name__)

UNIFORM_KAPPA = 1e-12
QUAD_RELTOL = 1e-11
QUAD_LIMIT = 200


def bessel_i(order: float, x: float) -> float:
    """Modified Bessel function of the first kind I_order(x)."""
    if order < 0 or x < 0:
        raise DomainError(f"bessel_i needs order >= 0 and x >= 0, got ({order}, {x})")
    value = float(special.iv(order, x))
    if not np.isfinite(value):
        raise BesselOverflowError(f"I_{order}({x}) overflows; use log_bessel_i")
    return value


def log_bessel_i(order: float, x):
    """log I_order(x), stable for large x. Vectorised over x."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.log(special.ive(order, x)) + x
    return float(out) if out.ndim == 0 else out


def log_surface_area(q: int) -> float:
    """log of the surface area of the q-sphere, 2 pi^{(q+1)/2} / Gamma((q+1)/2)."""
    if q < 0:
        raise DomainError(f"Sphere dimension must be >= 0, got {q}")
    a = 0.5 * (q + 1)
    return float(np.log(2.0) + a * np.log(np.pi) - special.gammaln(a))


def surface_area(q: int) -> float:
    return float(np.exp(log_surface_area(q)))


def log_vmf_norm_const(q: int, kappa):
    """log C_q(kappa) for the von Mises-Fisher density on the q-sphere."""
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa < 0):
        raise DomainError("Concentration must be non-negative")
    nu = 0.5 * (q - 1)
    safe = np.maximum(kappa, UNIFORM_KAPPA)
    with np.errstate(divide="ignore"):
        out = nu * np.log(safe) - 0.5 * (q + 1) * np.log(2.0 * np.pi) - log_bessel_i(nu, safe)
    out = np.where(kappa < UNIFORM_KAPPA, -log_surface_area(q), out)
    return float(out) if out.ndim == 0 else out


def vmf_norm_const(q: int, kappa: float) -> float:
    """C_q(kappa); the uniform limit 1/area is returned for kappa < 1e-12."""
    return float(np.exp(log_vmf_norm_const(q, kappa)))


def _profile_integral(kernel: "Kernel", kappa: float, dim: int) -> float:
    """Integral of L(kappa (1 - y^T nu)) over the dim-sphere, by quadrature.

    Written with t = cos(theta) so the slice weight (1 - t^2)^{dim/2 - 1} becomes
    sin^{dim-1}(theta), which has no endpoint singularity for any dim >= 1.
    """
    theta_max = np.pi
    if kappa > 0 and np.isfinite(kernel.support_bound):
        t_min = 1.0 - kernel.support_bound / kappa
        if t_min > -1.0:
            theta_max = float(np.arccos(t_min))

    def integrand(theta: float) -> float:
        r = kappa * (1.0 - np.cos(theta))
        return float(kernel.eval(max(r, 0.0))) * np.sin(theta) ** (dim - 1)

    result = integrate.quad(
        integrand, 0.0, theta_max, epsabs=0.0, epsrel=QUAD_RELTOL, limit=QUAD_LIMIT,
        full_output=1,
    )
    value = result[0]
    if len(result) > 3:
        raise QuadratureFailureError(
            f"Quadrature for {kernel.spec} (kappa={kappa}, dim={dim}) failed: {result[3]}"
        )
    if value <= 0:
        raise QuadratureFailureError(f"Non-positive kernel mass {value} for {kernel.spec}")
    return value * surface_area(dim - 1)


def log_profile_norm(kernel: "Kernel", kappa: float, dim: int, method: str = "auto") -> float:
    """log of the constant C with C * integral over the dim-sphere of L(kappa(1 - y^T nu)) = 1."""
    if kappa < 0:
        raise DomainError(f"Concentration must be non-negative, got {kappa}")
    if method not in ("auto", "quadrature"):
        raise ValueError(f"Unknown normalisation method {method!r}")
    if method == "auto":
        closed = kernel.closed_form_log_norm(kappa, dim)
        if closed is not None:
            return closed
    if kappa < UNIFORM_KAPPA:
        return -log_surface_area(dim) - float(np.log(kernel.eval(0.0)))
    return -float(np.log(_profile_integral(kernel, kappa, dim)))


def kernel_norm_const(kernel: "Kernel", h: float, q: int, method: str = "auto") -> float:
    """c_{h,q,L}: normaliser of the directional KDE on the q-sphere."""
    if h <= 0:
        raise DomainError(f"Bandwidth must be positive, got {h}")
    return float(np.exp(log_profile_norm(kernel, 1.0 / h**2, q, method)))


def mixture_norm_const(kernel: "Kernel", kappa: float, q: int, method: str = "auto") -> float:
    """C_{kappa,q+1,L}: normaliser of one mixture component on the (q+1)-sphere.

    Uses the (q+1)-sphere slice weight (1 - t^2)^{(q-1)/2}.
    """
    return float(np.exp(log_profile_norm(kernel, kappa, q + 1, method)))


@dataclass(frozen=True)
class NormalizingConstants:
    """Normalisers for a KDE with bandwidth h on the q-sphere."""
    c_hqL: float
    C_mix: float
    q: int
    h: float

    @classmethod
    def compute(cls, kernel: "Kernel", h: float, q: int, method: str = "auto") -> "NormalizingConstants":
        return cls(
            c_hqL=kernel_norm_const(kernel, h, q, method),
            C_mix=mixture_norm_const(kernel, 1.0 / h**2, q, method),
            q=q,
            h=h,
        )


def bessel_ratio_A(q: int, kappa):
    """A_q(kappa) = I_{(q+1)/2}(kappa) / I_{(q-1)/2}(kappa), in [0, 1)."""
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa < 0):
        raise DomainError("Concentration must be non-negative")
    safe = np.maximum(kappa, UNIFORM_KAPPA)
    out = special.ive(0.5 * (q + 1), safe) / special.ive(0.5 * (q - 1), safe)
    out = np.where(kappa < UNIFORM_KAPPA, 0.0, out)
    return float(out) if out.ndim == 0 else out


def kappa_from_A(q: int, A: float, cap: float = np.inf) -> float:
    """Approximate inverse of A_q: ((q+1)A - A^3) / (1 - A^2), optionally capped."""
    if A >= 1.0:
        raise DomainError(f"Mean resultant length {A} >= 1: data are numerically coincident")
    if A < 0:
        raise DomainError(f"Mean resultant length must be non-negative, got {A}")
    kappa = ((q + 1) * A - A**3) / (1.0 - A * A)
    if kappa > cap:
        logger.warning("Concentration %.3g capped at %.3g", kappa, cap)
        return float(cap)
    return float(kappa)


def kappa_from_A_exact(q: int, A: float, cap: float = 1e6) -> float:
    """Solve A_q(kappa) = A by Brent's method, bracketed by the approximation."""
    guess = kappa_from_A(q, A, cap=cap)
    if A == 0.0:
        return 0.0
    lo, hi = 0.5 * guess, 2.0 * guess + 1.0
    while bessel_ratio_A(q, hi) < A and hi < cap:
        hi = min(2.0 * hi, cap)
    if bessel_ratio_A(q, hi) < A:
        return float(cap)
    return float(optimize.brentq(lambda k: bessel_ratio_A(q, k) - A, lo, hi, xtol=1e-12))
