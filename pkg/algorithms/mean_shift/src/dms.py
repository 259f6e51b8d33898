"""Directional mean shift.

The update F(x) = -sum_i X_i L'(.) / ||sum_i X_i L'(.)|| is the gradient of the
KDE normalised back onto the sphere. Trajectories from many starts are merged
into a ModeSet; grids of starts give basins of attraction.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np
from numpy.typing import ArrayLike
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from framework.core.errors import (
    AscentViolationError,
    DegenerateStepError,
    NoConvergedTrajectoryError,
)
from framework.core.kde import KdeModel
from framework.core.sphere_core import (
    ZERO_NORM,
    PointLike,
    UnitVector,
    as_coords,
    as_points,
    geodesic_distances,
    lattice_starts,
)

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-7
DEFAULT_MAX_ITER = 1000
DEFAULT_MERGE_TOL = 0.05
ASCENT_SLACK = 1e-12
HESSIAN_TOL = 1e-8
BATCH_CHUNK = 1024


class DmsStatus(Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    DEGENERATE = "degenerate"


@dataclass
class DmsTrajectory:
    points: np.ndarray
    densities: np.ndarray
    status: DmsStatus
    iterations: int

    @property
    def endpoint(self) -> np.ndarray:
        return self.points[-1]

    @property
    def converged(self) -> bool:
        return self.status is DmsStatus.CONVERGED

    @property
    def step_norms(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)


@dataclass
class BatchResult:
    """Endpoints of many trajectories run side by side."""
    endpoints: np.ndarray
    status: List[DmsStatus]
    iterations: np.ndarray
    densities: np.ndarray

    @property
    def converged_mask(self) -> np.ndarray:
        return np.array([s is DmsStatus.CONVERGED for s in self.status], dtype=bool)


@dataclass
class ModeSet:
    """Distinct local maxima, sorted by density (highest first).

    labels[k] is the mode reached from start k, or -1. Endpoints that failed the
    second-order check (saddles, minima) are kept in `rejected`.
    """
    modes: np.ndarray
    densities: np.ndarray
    counts: np.ndarray
    merge_tol: float
    labels: np.ndarray
    rejected: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))

    def __len__(self) -> int:
        return self.modes.shape[0]

    def assign(self, points: ArrayLike) -> np.ndarray:
        """Index of the mode within merge_tol of each point, or -1."""
        points = as_points(points)
        if len(self) == 0:
            return np.full(points.shape[0], -1, dtype=int)
        dist = geodesic_distances(points, self.modes)
        nearest = np.argmin(dist, axis=1)
        hit = dist[np.arange(points.shape[0]), nearest] <= self.merge_tol
        return np.where(hit, nearest, -1)


def _step_coords(model: KdeModel, x: np.ndarray) -> np.ndarray:
    numerator = model.mean_shift_numerator(x)
    norm = float(np.linalg.norm(numerator))
    if norm < ZERO_NORM:
        raise DegenerateStepError("Mean shift numerator vanished: no kernel reaches this point")
    return numerator / norm


def step(model: KdeModel, x: PointLike) -> UnitVector:
    """One mean shift update F(x)."""
    return UnitVector(_step_coords(model, as_coords(x, dim=model.dim)))


def run(
    model: KdeModel,
    x0: PointLike,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
) -> DmsTrajectory:
    """Iterate F from x0 until ||x(t+1) - x(t)|| < eps or max_iter steps.

    A vanishing numerator ends the trajectory with status DEGENERATE. A density
    drop beyond the relative slack raises AscentViolationError.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = UnitVector(as_coords(x0, dim=model.dim)).coords
    points = [x]
    densities = [model.density(x)]
    status = DmsStatus.MAX_ITER
    for _ in range(max_iter):
        try:
            x_new = _step_coords(model, x)
        except DegenerateStepError:
            status = DmsStatus.DEGENERATE
            break
        f_new = model.density(x_new)
        f_old = densities[-1]
        if f_new < f_old - ASCENT_SLACK * abs(f_old):
            raise AscentViolationError(
                f"Density fell from {f_old!r} to {f_new!r} at iteration {len(points)}"
            )
        points.append(x_new)
        densities.append(f_new)
        if np.linalg.norm(x_new - x) < eps:
            status = DmsStatus.CONVERGED
            break
        x = x_new
    return DmsTrajectory(
        points=np.array(points),
        densities=np.array(densities),
        status=status,
        iterations=len(points) - 1,
    )


def _run_chunk(model, starts, eps, max_iter, joint_stop):
    x = starts.copy()
    m = x.shape[0]
    active = np.ones(m, dtype=bool)
    iterations = np.zeros(m, dtype=int)
    status = np.full(m, DmsStatus.MAX_ITER, dtype=object)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        numerators = model.mean_shift_numerators(x[idx])
        norms = np.linalg.norm(numerators, axis=1)
        degenerate = norms < ZERO_NORM
        if np.any(degenerate):
            status[idx[degenerate]] = DmsStatus.DEGENERATE
            active[idx[degenerate]] = False
        moving = idx[~degenerate]
        new = numerators[~degenerate] / norms[~degenerate, None]
        displacement = np.linalg.norm(new - x[moving], axis=1)
        x[moving] = new
        iterations[moving] += 1
        if joint_stop:
            if moving.size and displacement.max() < eps:
                status[moving] = DmsStatus.CONVERGED
                active[moving] = False
        else:
            done = displacement < eps
            status[moving[done]] = DmsStatus.CONVERGED
            active[moving[done]] = False
    return x, list(status), iterations


def run_batch(
    model: KdeModel,
    starts: ArrayLike,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    joint_stop: bool = False,
    chunk: int = BATCH_CHUNK,
) -> BatchResult:
    """Vectorised mean shift from every start.

    With joint_stop the whole chunk stops together once the largest displacement
    falls below eps; otherwise each start stops on its own.
    """
    starts = as_points(starts, dim=model.dim)
    starts = starts / np.linalg.norm(starts, axis=1, keepdims=True)
    endpoints, status, iterations = [], [], []
    for lo in range(0, starts.shape[0], chunk):
        x, s, it = _run_chunk(model, starts[lo:lo + chunk], eps, max_iter, joint_stop)
        endpoints.append(x)
        status.extend(s)
        iterations.append(it)
    endpoints = np.vstack(endpoints)
    return BatchResult(
        endpoints=endpoints,
        status=status,
        iterations=np.concatenate(iterations),
        densities=model.densities(endpoints),
    )


def default_starts(model: KdeModel) -> np.ndarray:
    """The data points followed by a lattice of 4(q+1)^2 points."""
    return np.vstack([model.data, lattice_starts(model.q, 4 * (model.q + 1) ** 2)])


def riemannian_hessian(model: KdeModel, m: PointLike) -> np.ndarray:
    """P (H - (m^T g) I) P with P = I - m m^T: the Hessian of f restricted to the sphere."""
    m = as_coords(m, dim=model.dim)
    m = m / np.linalg.norm(m)
    proj = np.eye(model.dim) - np.outer(m, m)
    inner = model.hessian(m) - (m @ model.gradient(m)) * np.eye(model.dim)
    return proj @ inner @ proj


def is_local_max(model: KdeModel, m: PointLike, tol: float = HESSIAN_TOL) -> bool:
    """Second-order check; kernels without a Hessian are accepted unchecked."""
    if not model.kernel.twice_differentiable:
        return True
    hess = riemannian_hessian(model, m)
    hess = 0.5 * (hess + hess.T)
    scale = max(1.0, float(np.abs(hess).max()))
    return bool(np.linalg.eigvalsh(hess).max() <= tol * scale)


def _single_linkage(points: np.ndarray, merge_tol: float) -> np.ndarray:
    """Cluster labels joining points within merge_tol radians (chained)."""
    chord = 2.0 * np.sin(0.5 * min(merge_tol, np.pi))
    pairs = cKDTree(points).query_pairs(chord, output_type="ndarray")
    m = points.shape[0]
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(m, m))
    _, labels = connected_components(graph, directed=False)
    return labels


def _merge(model, endpoints, densities, merge_tol, verify):
    """Representatives (highest density, lowest index on ties) of each cluster."""
    labels = _single_linkage(endpoints, merge_tol)
    reps, rejected, cluster_to_rep = [], [], {}
    for cluster in np.unique(labels):
        members = np.flatnonzero(labels == cluster)
        best = members[np.argmax(densities[members])]
        if verify and not is_local_max(model, endpoints[best]):
            logger.warning("Rejected non-maximal endpoint %s", np.array2string(endpoints[best], precision=4))
            rejected.append(endpoints[best])
            cluster_to_rep[cluster] = -1
            continue
        cluster_to_rep[cluster] = len(reps)
        reps.append(best)
    member_rep = np.array([cluster_to_rep[c] for c in labels], dtype=int)
    return np.array(reps, dtype=int), member_rep, rejected


def find_modes(
    model: KdeModel,
    starts: Optional[ArrayLike] = None,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    merge_tol: float = DEFAULT_MERGE_TOL,
    joint_stop: bool = False,
    verify: bool = True,
) -> ModeSet:
    """Run mean shift from every start and merge the endpoints into modes."""
    starts = default_starts(model) if starts is None else as_points(starts, dim=model.dim)
    if starts.shape[0] == 0:
        raise ValueError("find_modes needs at least one start")
    batch = run_batch(model, starts, eps, max_iter, joint_stop)
    converged = np.flatnonzero(batch.converged_mask)
    if converged.size == 0:
        raise NoConvergedTrajectoryError(f"None of {starts.shape[0]} starts converged")

    ends = batch.endpoints[converged]
    dens = batch.densities[converged]
    reps, member_rep, rejected = _merge(model, ends, dens, merge_tol, verify)
    order = np.argsort(-dens[reps], kind="stable")
    rank = np.empty(len(reps), dtype=int)
    rank[order] = np.arange(len(reps))

    labels = np.full(starts.shape[0], -1, dtype=int)
    if reps.size:
        labels[converged] = np.where(member_rep >= 0, rank[np.maximum(member_rep, 0)], -1)
    counts = np.bincount(labels[labels >= 0], minlength=len(reps))
    logger.info(
        "%d modes from %d starts (%d converged, %d rejected)",
        len(reps), starts.shape[0], converged.size, len(rejected),
    )
    return ModeSet(
        modes=ends[reps][order],
        densities=dens[reps][order],
        counts=counts,
        merge_tol=merge_tol,
        labels=labels,
        rejected=np.array(rejected).reshape(-1, model.dim),
    )


@dataclass
class BasinGrid:
    labels: np.ndarray
    iterations: np.ndarray
    modes: ModeSet

    @property
    def labelled_fraction(self) -> float:
        return float(np.mean(self.labels >= 0))


def basin_grid(
    model: KdeModel,
    grid: ArrayLike,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    merge_tol: float = DEFAULT_MERGE_TOL,
    joint_stop: bool = False,
) -> BasinGrid:
    """Label every grid point by the mode its trajectory reaches (-1 if none).

    Modes come from the default starts; converged grid endpoints near no known
    mode are merged among themselves and added before labelling.
    """
    grid = as_points(grid, dim=model.dim)
    if grid.shape[0] == 0:
        raise ValueError("basin_grid needs a non-empty grid")
    batch = run_batch(model, grid, eps, max_iter, joint_stop)
    converged = batch.converged_mask
    try:
        modes = find_modes(model, None, eps, max_iter, merge_tol, joint_stop)
    except NoConvergedTrajectoryError:
        modes = ModeSet(
            modes=np.empty((0, model.dim)),
            densities=np.empty(0),
            counts=np.empty(0, dtype=int),
            merge_tol=merge_tol,
            labels=np.empty(0, dtype=int),
        )

    labels = np.where(converged, modes.assign(batch.endpoints), -1)
    orphans = np.flatnonzero(converged & (labels < 0))
    if orphans.size:
        ends, dens = batch.endpoints[orphans], batch.densities[orphans]
        reps, _, _ = _merge(model, ends, dens, merge_tol, verify=True)
        if reps.size:
            logger.info("Grid reached %d modes missed by the default starts", reps.size)
            all_modes = np.vstack([modes.modes, ends[reps]])
            all_dens = np.concatenate([modes.densities, dens[reps]])
            order = np.argsort(-all_dens, kind="stable")
            modes = ModeSet(
                modes=all_modes[order],
                densities=all_dens[order],
                counts=np.zeros(len(order), dtype=int),
                merge_tol=merge_tol,
                labels=np.empty(0, dtype=int),
                rejected=modes.rejected,
            )
            labels = np.where(converged, modes.assign(batch.endpoints), -1)

    modes.counts = np.bincount(labels[labels >= 0], minlength=len(modes))
    modes.labels = labels
    return BasinGrid(labels=labels, iterations=batch.iterations, modes=modes)
