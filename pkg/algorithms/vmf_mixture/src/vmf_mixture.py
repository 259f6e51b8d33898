"""Mixtures of von Mises-Fisher distributions: density, sampling, EM fitting and
the vMF-reference rule-of-thumb bandwidth for directional KDEs."""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np
from numpy.typing import ArrayLike
from scipy import special
from scipy.optimize import linear_sum_assignment
from scipy.stats import vonmises_fisher

from framework.core.config_loader import MixtureSpec
from framework.core.errors import DomainError, EmptyComponentError
from framework.core.special_fn import kappa_from_A, kappa_from_A_exact, log_vmf_norm_const
from framework.core.sphere_core import (
    PointLike,
    as_coords,
    as_points,
    geodesic_distances,
    normalize_rows,
)

logger = logging.getLogger(__name__)

KAPPA_CAP = 1e6
EMPTY_MASS = 1e-12
COINCIDENT_A = 1.0 - 1e-12
TRACE_SLACK = 1e-10


@dataclass
class VmfMixture:
    weights: np.ndarray
    means: np.ndarray
    kappas: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.means = normalize_rows(np.atleast_2d(np.asarray(self.means, dtype=float)))
        self.kappas = np.asarray(self.kappas, dtype=float).reshape(-1)
        m = self.weights.size
        if m < 1 or self.means.shape[0] != m or self.kappas.size != m:
            raise DomainError("Mixture needs matching numbers of weights, means and kappas")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise DomainError(f"Weights must be non-negative and sum to 1, got {self.weights}")
        if np.any(self.kappas < 0):
            raise DomainError("Concentrations must be non-negative")

    @property
    def M(self) -> int:
        return self.weights.size

    @property
    def q(self) -> int:
        return self.means.shape[1] - 1

    @classmethod
    def from_spec(cls, spec: MixtureSpec) -> "VmfMixture":
        return cls(weights=spec.weights, means=spec.means, kappas=spec.kappas)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "VmfMixture":
        return cls.from_spec(MixtureSpec.from_dict(data))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "kappas": self.kappas.tolist(),
        }

    def component_log_densities(self, points: ArrayLike) -> np.ndarray:
        """(m, M) array of log alpha_j + log f_vMF(y | mu_j, kappa_j)."""
        y = as_points(points, dim=self.q + 1)
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        return (
            log_w
            + log_vmf_norm_const(self.q, self.kappas)
            + self.kappas * np.einsum("mj,kj->mk", y, self.means)
        )

    def log_density(self, points: ArrayLike) -> np.ndarray:
        return special.logsumexp(self.component_log_densities(points), axis=1)

    def density(self, y: PointLike) -> float:
        return mixture_density(self, y)


def mixture_density(mix: VmfMixture, y: PointLike) -> float:
    """sum_j alpha_j C_q(kappa_j) exp(kappa_j mu_j^T y)."""
    y = as_coords(y, dim=mix.q + 1)
    return float(np.exp(mix.log_density(y[None, :])[0]))


def sample(mix: VmfMixture, n: int, seed: int) -> np.ndarray:
    """n draws: a categorical component label, then an exact vMF draw.

    The generator is numpy's PCG64 seeded with `seed`.
    """
    if n < 1:
        raise ValueError(f"Sample size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    labels = rng.choice(mix.M, size=n, p=mix.weights)
    out = np.empty((n, mix.q + 1))
    for j in range(mix.M):
        idx = np.flatnonzero(labels == j)
        if idx.size == 0:
            continue
        if mix.kappas[j] == 0:
            out[idx] = normalize_rows(rng.standard_normal((idx.size, mix.q + 1)))
        else:
            draws = vonmises_fisher(mix.means[j], mix.kappas[j]).rvs(idx.size, random_state=rng)
            out[idx] = np.atleast_2d(draws)
    return out


@dataclass
class EmFitReport:
    fitted: VmfMixture
    loglik_trace: List[float]
    iterations: int
    converged: bool
    responsibilities: np.ndarray = field(repr=False, default=None)
    kappa_capped: List[int] = field(default_factory=list)


def _farthest_point_init(data: np.ndarray, M: int, rng: np.random.Generator) -> np.ndarray:
    chosen = [int(rng.integers(data.shape[0]))]
    closest = 1.0 - data @ data[chosen[0]]
    for _ in range(1, M):
        nxt = int(np.argmax(closest))
        chosen.append(nxt)
        closest = np.minimum(closest, 1.0 - data @ data[nxt])
    return data[chosen].copy()


def _kappa_objective(q: int, kappa: float, mass: float, A: float) -> float:
    """Component term of Q in kappa: N_j (log C_q(kappa) + kappa * A)."""
    return mass * (float(log_vmf_norm_const(q, kappa)) + kappa * A)


def em_fit(
    data: ArrayLike,
    M: int,
    seed: int,
    tol: float = 1e-8,
    max_iter: int = 500,
    refine_kappa: bool = False,
    kappa_cap: float = KAPPA_CAP,
    min_mass: float = EMPTY_MASS,
) -> EmFitReport:
    """Fit an M-component vMF mixture by EM.

    tol is relative: the fit stops once |loglik(t) - loglik(t-1)| <= tol * |loglik(t-1)|.
    The approximate concentration update is only accepted when it does not lower
    the component's Q term, so the trace is monotone. Components whose
    concentration hit kappa_cap are listed in kappa_capped. A component whose
    responsibility mass drops below min_mass is reinitialised once at a poorly
    fitted point; a second collapse raises EmptyComponentError. Data coinciding
    to machine precision (mean resultant length within 1e-12 of 1) raise
    DomainError.
    """
    y = normalize_rows(as_points(data))
    n, d = y.shape
    q = d - 1
    if n < M:
        raise ValueError(f"Need at least M = {M} points, got {n}")
    rng = np.random.default_rng(seed)
    mix = VmfMixture(weights=np.full(M, 1.0 / M), means=_farthest_point_init(y, M, rng), kappas=np.ones(M))
    reinitialised = set()
    capped = set()
    trace: List[float] = []
    converged = False
    resp = None
    iterations = 0

    for iterations in range(1, max_iter + 1):
        comp = mix.component_log_densities(y)
        point_ll = special.logsumexp(comp, axis=1)
        resp = np.exp(comp - point_ll[:, None])
        ll = float(np.sum(point_ll))
        if trace and ll < trace[-1] - TRACE_SLACK * abs(trace[-1]):
            logger.warning("Log-likelihood decreased from %.12g to %.12g", trace[-1], ll)
        trace.append(ll)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= tol * abs(trace[-2]):
            converged = True
            break

        mass = resp.sum(axis=0)
        fresh = set()
        worst_first = np.argsort(point_ll)
        for k, j in enumerate(np.flatnonzero(mass < min_mass)):
            j = int(j)
            if j in reinitialised:
                raise EmptyComponentError(f"Component {j} collapsed twice")
            reinitialised.add(j)
            fresh.add(j)
            worst = int(worst_first[k])
            logger.warning("Component %d collapsed; reinitialised at point %d", j, worst)
            resp[:, j] = 0.0
            resp[worst] = 0.0
            resp[worst, j] = 1.0
            mass = resp.sum(axis=0)

        weights = mass / n
        resultant = np.einsum("ik,ij->kj", resp, y)
        r_norm = np.linalg.norm(resultant, axis=1)
        means = resultant / r_norm[:, None]
        kappas = mix.kappas.copy()
        for j in range(M):
            if j in fresh:
                kappas[j] = 1.0
                continue
            A = r_norm[j] / mass[j]
            if A >= COINCIDENT_A:
                raise DomainError(
                    f"Component {j} has mean resultant length {A!r}: its points are numerically coincident"
                )
            if refine_kappa:
                candidate = kappa_from_A_exact(q, A, cap=kappa_cap)
            else:
                candidate = kappa_from_A(q, A, cap=kappa_cap)
            if _kappa_objective(q, candidate, mass[j], A) >= _kappa_objective(q, kappas[j], mass[j], A):
                kappas[j] = candidate
                if candidate >= kappa_cap:
                    capped.add(j)
        mix = VmfMixture(weights=weights / weights.sum(), means=means, kappas=kappas)
        logger.debug("EM iteration %d: loglik %.12g", iterations, ll)

    logger.info("vMF EM with M=%d stopped after %d iterations (converged=%s)", M, iterations, converged)
    return EmFitReport(
        fitted=mix,
        loglik_trace=trace,
        iterations=iterations,
        converged=converged,
        responsibilities=resp,
        kappa_capped=sorted(capped),
    )


def rule_of_thumb_bandwidth(data: ArrayLike) -> float:
    """vMF-reference AMISE-optimal bandwidth from a single fitted vMF.

    h = [4 sqrt(pi) I_{(q-1)/2}(k)^2 / (k^{(q+1)/2} n (2q I_{(q+1)/2}(2k) + (2+q) k I_{(q+3)/2}(2k)))]^{1/(q+4)}
    evaluated with exponentially scaled Bessel functions (the e^{2k} factors cancel).
    """
    y = normalize_rows(as_points(data))
    n, d = y.shape
    q = d - 1
    if n < 2:
        raise DomainError("Rule-of-thumb bandwidth needs at least 2 points")
    A = float(np.linalg.norm(y.mean(axis=0)))
    kappa = kappa_from_A(q, A)
    if kappa < 1e-8:
        raise DomainError("Data look uniform (kappa ~ 0); the rule of thumb is undefined")
    numerator = 4.0 * np.sqrt(np.pi) * special.ive(0.5 * (q - 1), kappa) ** 2
    bracket = 2 * q * special.ive(0.5 * (q + 1), 2 * kappa) + (2 + q) * kappa * special.ive(
        0.5 * (q + 3), 2 * kappa
    )
    h = (numerator / (kappa ** (0.5 * (q + 1)) * n * bracket)) ** (1.0 / (q + 4))
    logger.info("Rule-of-thumb bandwidth %.6g (kappa_hat=%.6g, n=%d)", h, kappa, n)
    return float(h)


def match_components(fitted_means: ArrayLike, true_means: ArrayLike) -> np.ndarray:
    """perm with fitted_means[perm[j]] matched to true_means[j], minimising total geodesic distance."""
    cost = geodesic_distances(as_points(true_means), as_points(fitted_means))
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(rows), dtype=int)
    perm[rows] = cols
    return perm


def permuted(mix: VmfMixture, perm: np.ndarray) -> VmfMixture:
    return VmfMixture(weights=mix.weights[perm], means=mix.means[perm], kappas=mix.kappas[perm])
