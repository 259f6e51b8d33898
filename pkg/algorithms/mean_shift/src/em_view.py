"""Mean shift read as EM on the (q+1)-sphere.

The KDE is the mixture sum_i alpha_i C_{kappa_i,q+1,L} L(kappa_i (1 - nu_i^T y))
observed at the single pseudo-point y = (0, ..., 0, 1). Because
nu_i(mu)^T y = mu^T X_i, every quantity below is written through mu^T X_i and the
embedding is never formed.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List

import numpy as np
from scipy.special import logsumexp

from framework.core.errors import AllZeroError, DegenerateStepError, InnerDivergenceError
from framework.core.kde import KdeModel
from framework.core.kernels import KernelKind
from framework.core.sphere_core import ZERO_NORM, PointLike, UnitVector, as_coords

from .dms import DEFAULT_EPS, DEFAULT_MAX_ITER, DmsStatus, _step_coords

logger = logging.getLogger(__name__)


@dataclass
class EmState:
    mu_t: UnitVector
    responsibilities: np.ndarray
    q_value: float
    obs_loglik: float


class InnerStop(Enum):
    CONVERGED = "converged"
    ZERO_DIVISION = "zero_division"
    NO_ASCENT = "no_ascent"


@dataclass
class MStepResult:
    mu: UnitVector
    inner_iterations: int
    stop: InnerStop

    @property
    def zero_division(self) -> bool:
        return self.stop is InnerStop.ZERO_DIVISION


def responsibilities(model: KdeModel, mu_t: PointLike) -> np.ndarray:
    """Posterior probabilities of the hidden component label given the pseudo-point."""
    terms = model.mixture_log_terms(as_coords(mu_t, dim=model.dim))
    if np.all(np.isneginf(terms)):
        raise AllZeroError("Every mixture component vanishes at this parameter")
    return np.exp(terms - logsumexp(terms))


def _q_from(model: KdeModel, p: np.ndarray, mu: np.ndarray) -> float:
    terms = model.mixture_log_terms(mu)
    used = p > 0
    if np.any(np.isneginf(terms[used])):
        return -np.inf
    return float(np.sum(p[used] * terms[used]))


def q_function(model: KdeModel, mu: PointLike, mu_t: PointLike) -> float:
    """Q(mu | mu_t); -inf when a component with positive responsibility has L = 0 at mu."""
    p = responsibilities(model, mu_t)
    return _q_from(model, p, as_coords(mu, dim=model.dim))


def observed_loglik(model: KdeModel, mu: PointLike) -> float:
    """log P(y | mu); equals log f(mu) + model.log_mass."""
    terms = model.mixture_log_terms(as_coords(mu, dim=model.dim))
    with np.errstate(divide="ignore"):
        return float(logsumexp(terms))


def em_state(model: KdeModel, mu_t: PointLike) -> EmState:
    mu = UnitVector(as_coords(mu_t, dim=model.dim))
    p = responsibilities(model, mu)
    return EmState(
        mu_t=mu,
        responsibilities=p,
        q_value=_q_from(model, p, mu.coords),
        obs_loglik=observed_loglik(model, mu),
    )


def gem_step(model: KdeModel, mu_t: PointLike) -> UnitVector:
    """First inner iteration of the M-step, started at mu_t.

    With responsibilities taken at mu_t, p_i * (-L'_i / L_i) is proportional to
    alpha_i C_{kappa_i,q+1,L} (-L'_i), so the update is the mean shift numerator.
    """
    return UnitVector(_step_coords(model, as_coords(mu_t, dim=model.dim)))


def exact_m_step(
    model: KdeModel,
    mu_t: PointLike,
    inner_tol: float = 1e-10,
    max_inner: int = 500,
) -> MStepResult:
    """Iterate the M-step stationarity equation from mu_t until it settles.

    An inner iterate that would divide by L = 0, or lower Q, is not taken; the
    last valid iterate is returned with the reason.
    """
    mu_t = as_coords(mu_t, dim=model.dim)
    p = responsibilities(model, mu_t)
    mu_hat = gem_step(model, mu_t).coords
    if model.kernel.kind is KernelKind.VON_MISES:
        # -L'/L = 1, so every inner iteration repeats the first
        return MStepResult(mu=UnitVector(mu_hat), inner_iterations=1, stop=InnerStop.CONVERGED)

    used = p > 0
    weights = p[used] * model.concentrations[used]
    data = model.data[used]
    q_hat = _q_from(model, p, mu_hat)
    for k in range(2, max_inner + 1):
        r = model.arguments(mu_hat)[used]
        values = model.kernel.eval(r)
        if np.any(values <= 0):
            logger.debug("Inner M-step hit L = 0 after %d iterations", k - 1)
            return MStepResult(UnitVector(mu_hat), k - 1, InnerStop.ZERO_DIVISION)
        ratio = -model.kernel.deriv(r) / values
        numerator = np.sum(data.T * (weights * ratio), axis=1)
        norm = float(np.linalg.norm(numerator))
        if norm < ZERO_NORM:
            return MStepResult(UnitVector(mu_hat), k - 1, InnerStop.ZERO_DIVISION)
        mu_new = numerator / norm
        q_new = _q_from(model, p, mu_new)
        if q_new < q_hat:
            return MStepResult(UnitVector(mu_hat), k - 1, InnerStop.NO_ASCENT)
        if np.linalg.norm(mu_new - mu_hat) < inner_tol:
            return MStepResult(UnitVector(mu_new), k, InnerStop.CONVERGED)
        mu_hat, q_hat = mu_new, q_new
    raise InnerDivergenceError(f"Exact M-step did not settle within {max_inner} inner iterations")


@dataclass
class EmRun:
    points: np.ndarray
    loglik: np.ndarray
    status: DmsStatus
    iterations: int
    inner_iterations: List[int]


def run_em(
    model: KdeModel,
    mu0: PointLike,
    inner: str = "single",
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    inner_tol: float = 1e-10,
    max_inner: int = 500,
) -> EmRun:
    """Outer EM loop with the one-step ("single") or iterated ("exact") M-step.

    The single variant reproduces the mean shift trajectory; the trace is the
    observed log-likelihood.
    """
    if inner not in ("single", "exact"):
        raise ValueError(f"inner must be 'single' or 'exact', got {inner!r}")
    mu = UnitVector(as_coords(mu0, dim=model.dim)).coords
    points, loglik, inner_counts = [mu], [observed_loglik(model, mu)], []
    status = DmsStatus.MAX_ITER
    for _ in range(max_iter):
        try:
            if inner == "single":
                mu_new, count = gem_step(model, mu).coords, 1
            else:
                result = exact_m_step(model, mu, inner_tol, max_inner)
                mu_new, count = result.mu.coords, result.inner_iterations
        except (DegenerateStepError, AllZeroError):
            status = DmsStatus.DEGENERATE
            break
        points.append(mu_new)
        loglik.append(observed_loglik(model, mu_new))
        inner_counts.append(count)
        if np.linalg.norm(mu_new - mu) < eps:
            status = DmsStatus.CONVERGED
            break
        mu = mu_new
    logger.debug("EM (%s M-step) stopped after %d iterations: %s", inner, len(points) - 1, status.value)
    return EmRun(
        points=np.array(points),
        loglik=np.array(loglik),
        status=status,
        iterations=len(points) - 1,
        inner_iterations=inner_counts,
    )
