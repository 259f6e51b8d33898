"""Convergence diagnostics for the mean shift map.

Near a mode m the iteration behaves like x(t+1) - m ~ J (x(t) - m) with
J = (I - m m^T) H(m) / ||g(m)||, so the largest |eigenvalue| of J bounds the
linear rate.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from framework.core.errors import InsufficientIterationsError, ZeroGradientError
from framework.core.kde import KdeModel
from framework.core.sphere_core import PointLike, as_coords

from .dms import DEFAULT_EPS, DmsTrajectory, _step_coords, run

logger = logging.getLogger(__name__)

GRADIENT_FLOOR = 1e-12
TANGENT_GATE = 1e-8
POLISH_TOL = 1e-13


@dataclass
class JacobianReport:
    """jac is the Jacobian of F; eigenvalues come from the symmetric projected form
    P H P / ||g|| (P = I - F F^T), which has the same spectrum."""
    jac: np.ndarray
    eigenvalues: np.ndarray
    max_abs_eig: float
    at_mode: bool
    asymmetry: float

    def to_dict(self) -> dict:
        return {
            "jacobian": self.jac.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "max_abs_eig": self.max_abs_eig,
            "at_mode": self.at_mode,
            "asymmetry": self.asymmetry,
        }


def gradient_split(model: KdeModel, x: PointLike) -> Tuple[float, float]:
    """(tangent, normal) norms of the ambient gradient at x."""
    x = as_coords(x, dim=model.dim)
    g = model.gradient(x)
    normal = float(x @ g)
    return float(np.linalg.norm(g - normal * x)), abs(normal)


def is_fixed_point(model: KdeModel, m: PointLike, eps: float = DEFAULT_EPS) -> bool:
    """||m - F(m)|| < 10 eps and the tangent gradient is negligible."""
    m = as_coords(m, dim=model.dim)
    tangent, normal = gradient_split(model, m)
    g_norm = np.hypot(tangent, normal)
    if g_norm <= GRADIENT_FLOOR:
        return False
    moved = float(np.linalg.norm(m - _step_coords(model, m)))
    return moved < 10 * eps and tangent < TANGENT_GATE * g_norm


def jacobian_F(model: KdeModel, x: PointLike, eps: float = DEFAULT_EPS) -> JacobianReport:
    """Jacobian of F(x) = g / ||g||.

    Away from modes: (I - F F^T) H / ||g||. At a verified mode the reduced form
    (I - m m^T) H / ||g|| is used and at_mode is set.
    """
    model.kernel.require_twice_differentiable("jacobian_F")
    x = as_coords(x, dim=model.dim)
    g = model.gradient(x)
    g_norm = float(np.linalg.norm(g))
    if g_norm <= GRADIENT_FLOOR:
        raise ZeroGradientError(f"Gradient norm {g_norm:.3g} is too small to normalise")
    hess = model.hessian(x)
    at_mode = is_fixed_point(model, x, eps)
    direction = x / np.linalg.norm(x) if at_mode else g / g_norm
    proj = np.eye(model.dim) - np.outer(direction, direction)

    jac = proj @ hess / g_norm
    sym = proj @ hess @ proj / g_norm
    eigenvalues = np.linalg.eigvalsh(0.5 * (sym + sym.T))
    scale = float(np.abs(jac).max()) or 1.0
    return JacobianReport(
        jac=jac,
        eigenvalues=eigenvalues,
        max_abs_eig=float(np.abs(eigenvalues).max()),
        at_mode=at_mode,
        asymmetry=float(np.abs(jac - jac.T).max()) / scale,
    )


def polish_mode(model: KdeModel, m: PointLike, tol: float = POLISH_TOL, max_iter: int = 10000) -> np.ndarray:
    """Continue mean shift from m until steps fall below tol."""
    traj = run(model, m, eps=tol, max_iter=max_iter)
    if not traj.converged:
        logger.warning("Polishing stopped with status %s after %d steps", traj.status.value, traj.iterations)
    return traj.endpoint


def rate_bound(model: KdeModel, m: PointLike, eps: float = DEFAULT_EPS) -> float:
    """max |eigenvalue| of the Jacobian at the (polished) mode m."""
    report = jacobian_F(model, polish_mode(model, m), eps)
    if not report.at_mode:
        logger.warning("rate_bound evaluated away from a verified mode")
    return report.max_abs_eig


def empirical_rate(
    traj: DmsTrajectory,
    m: PointLike,
    eps: float = DEFAULT_EPS,
    last: Optional[int] = None,
    min_ratios: int = 3,
) -> np.ndarray:
    """Ratios ||x(t+1) - m|| / ||x(t) - m|| over iterates still farther than 10 eps from m."""
    m = as_coords(m)
    dist = np.linalg.norm(traj.points - m, axis=1)
    usable = np.flatnonzero(dist[:-1] > 10 * eps)
    ratios = dist[usable + 1] / dist[usable]
    if last is not None:
        ratios = ratios[-last:]
    if ratios.size < min_ratios:
        raise InsufficientIterationsError(
            f"Only {ratios.size} usable iterations, need at least {min_ratios}"
        )
    return ratios


def taylor_residuals(
    model: KdeModel,
    m: PointLike,
    scales: Sequence[float] = tuple(np.geomspace(1e-2, 1e-4, 9)),
    seed: int = 0,
) -> Tuple[np.ndarray, np.ndarray]:
    """(||x - m||, ||F(x) - m - J (x - m)||) along a random tangent direction."""
    m = polish_mode(model, as_coords(m, dim=model.dim))
    jac = jacobian_F(model, m).jac
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(model.dim)
    u -= (u @ m) * m
    u /= np.linalg.norm(u)
    offsets, residuals = [], []
    for s in scales:
        x = m + s * u
        x /= np.linalg.norm(x)
        delta = x - m
        offsets.append(np.linalg.norm(delta))
        residuals.append(np.linalg.norm(_step_coords(model, x) - m - jac @ delta))
    return np.array(offsets), np.array(residuals)


def taylor_exponent(model: KdeModel, m: PointLike, seed: int = 0) -> float:
    """Slope of log residual against log offset; about 2 when the linearisation holds."""
    offsets, residuals = taylor_residuals(model, m, seed=seed)
    slope, _ = np.polyfit(np.log(offsets), np.log(residuals), 1)
    return float(slope)
