"""Directional kernel density estimator on the q-sphere.

Each data point X_i carries a weight alpha_i and a concentration kappa_i. On the
(q+1)-sphere the estimator is the mixture with coefficients
alpha_i * C_{kappa_i,q+1,L}; on the q-sphere it is the same sum of kernels
renormalised to unit mass. With the defaults alpha_i = 1/n, kappa_i = 1/h^2 this
is the usual estimator (c_{h,q,L} / n) * sum_i L((1 - x^T X_i) / h^2).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import logsumexp

from .errors import DomainError
from .kernels import Kernel, parse_kernel
from .special_fn import NormalizingConstants, log_profile_norm
from .sphere_core import PointLike, as_coords, as_points, normalize_rows

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class KdeModel:
    """Immutable KDE. Build with KdeModel.build; all evaluators are pure."""

    data: np.ndarray
    kernel: Kernel
    h: float
    weights: np.ndarray
    concentrations: np.ndarray
    log_mix_coef: np.ndarray
    log_mass: float
    norms: NormalizingConstants

    @classmethod
    def build(
        cls,
        data: ArrayLike,
        h: float,
        kernel: Union[str, Kernel] = "von_mises",
        weights: Optional[ArrayLike] = None,
        concentrations: Optional[ArrayLike] = None,
        method: str = "auto",
    ) -> "KdeModel":
        kernel = parse_kernel(kernel)
        if not h > 0:
            raise DomainError(f"Bandwidth must be positive, got {h}")
        points = normalize_rows(as_points(data))
        n, d = points.shape
        if n == 0:
            raise DomainError("KDE needs at least one data point")
        q = d - 1

        if weights is None:
            alpha = np.full(n, 1.0 / n)
        else:
            alpha = np.asarray(weights, dtype=float).reshape(-1)
            if alpha.size != n or np.any(alpha < 0):
                raise DomainError("Weights must be n non-negative reals")
            if abs(alpha.sum() - 1.0) > WEIGHT_SUM_TOL:
                raise DomainError(f"Weights must sum to 1, got {alpha.sum()!r}")

        if concentrations is None:
            kappa = np.full(n, 1.0 / h**2)
        else:
            kappa = np.asarray(concentrations, dtype=float).reshape(-1)
            if kappa.size != n or np.any(kappa <= 0):
                raise DomainError("Concentrations must be n positive reals")

        # One normaliser per distinct concentration.
        unique, inverse = np.unique(kappa, return_inverse=True)
        log_c_mix = np.array([log_profile_norm(kernel, k, q + 1, method) for k in unique])
        log_c_dir = np.array([log_profile_norm(kernel, k, q, method) for k in unique])
        with np.errstate(divide="ignore"):
            log_mix_coef = np.log(alpha) + log_c_mix[inverse]
        log_mass = float(logsumexp(log_mix_coef - log_c_dir[inverse]))

        points.setflags(write=False)
        model = cls(
            data=points,
            kernel=kernel,
            h=float(h),
            weights=alpha,
            concentrations=kappa,
            log_mix_coef=log_mix_coef,
            log_mass=log_mass,
            norms=NormalizingConstants.compute(kernel, h, q, method),
        )
        logger.debug("Built KDE: n=%d q=%d h=%.6g kernel=%s", n, q, h, kernel.spec)
        return model

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def q(self) -> int:
        return self.data.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def log_density_coef(self) -> np.ndarray:
        """log of the per-point coefficients of the density on the q-sphere."""
        return self.log_mix_coef - self.log_mass

    @property
    def density_coef(self) -> np.ndarray:
        return np.exp(self.log_density_coef)

    def _point(self, x: PointLike) -> np.ndarray:
        return as_coords(x, dim=self.dim)

    def _batch(self, points: ArrayLike) -> np.ndarray:
        return as_points(points, dim=self.dim)

    def arguments(self, x: PointLike) -> np.ndarray:
        """Kernel arguments r_i = kappa_i (1 - x^T X_i), clamped at 0."""
        t = np.clip(np.einsum("ij,j->i", self.data, self._point(x)), -1.0, 1.0)
        return np.maximum(self.concentrations * (1.0 - t), 0.0)

    def arguments_batch(self, points: ArrayLike) -> np.ndarray:
        t = np.clip(np.einsum("mj,ij->mi", self._batch(points), self.data), -1.0, 1.0)
        return np.maximum(self.concentrations[None, :] * (1.0 - t), 0.0)

    # Density

    def density(self, x: PointLike) -> float:
        return float(np.sum(self.density_coef * self.kernel.eval(self.arguments(x))))

    def densities(self, points: ArrayLike) -> np.ndarray:
        values = self.density_coef[None, :] * self.kernel.eval(self.arguments_batch(points))
        return np.sum(values, axis=1)

    def log_density(self, x: PointLike) -> float:
        """log f(x) by log-sum-exp; -inf where every kernel vanishes."""
        with np.errstate(divide="ignore"):
            return float(logsumexp(self.log_density_coef + self.kernel.log_eval(self.arguments(x))))

    def log_densities(self, points: ArrayLike) -> np.ndarray:
        terms = self.log_density_coef[None, :] + self.kernel.log_eval(self.arguments_batch(points))
        with np.errstate(divide="ignore"):
            return logsumexp(terms, axis=1)

    def mixture_log_terms(self, mu: PointLike) -> np.ndarray:
        """log(alpha_i C_{kappa_i,q+1,L}) + log L(r_i): component log densities on the (q+1)-sphere."""
        return self.log_mix_coef + self.kernel.log_eval(self.arguments(mu))

    # Derivatives in the ambient space

    def gradient(self, x: PointLike) -> np.ndarray:
        s = self.density_coef * self.concentrations * self.kernel.deriv(self.arguments(x))
        return -np.sum(self.data.T * s, axis=1)

    def gradients(self, points: ArrayLike) -> np.ndarray:
        s = self.density_coef * self.concentrations * self.kernel.deriv(self.arguments_batch(points))
        return -np.einsum("mi,ij->mj", s, self.data)

    def hessian(self, x: PointLike) -> np.ndarray:
        self.kernel.require_twice_differentiable("hessian")
        s = self.density_coef * self.concentrations**2 * self.kernel.deriv2(self.arguments(x))
        hess = np.einsum("i,ij,ik->jk", s, self.data, self.data)
        return 0.5 * (hess + hess.T)

    # Mean shift

    def mean_shift_weights(self, x: PointLike) -> np.ndarray:
        """kappa_i alpha_i C_{kappa_i,q+1,L} (-L'(r_i)), non-negative."""
        return -np.exp(self.log_mix_coef) * self.concentrations * self.kernel.deriv(self.arguments(x))

    def mean_shift_numerator(self, x: PointLike) -> np.ndarray:
        return np.sum(self.data.T * self.mean_shift_weights(x), axis=1)

    def mean_shift_numerators(self, points: ArrayLike) -> np.ndarray:
        s = -np.exp(self.log_mix_coef) * self.concentrations * self.kernel.deriv(
            self.arguments_batch(points)
        )
        return np.einsum("mi,ij->mj", s, self.data)
