"""Geometry primitives on the unit hypersphere.

Points of the q-sphere are stored as (q+1)-vectors of direction cosines. Single
points are wrapped in UnitVector; batches are plain (m, q+1) float arrays so the
hot loops in kde and dms stay vectorised.
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from numpy.typing import ArrayLike
from scipy.stats import norm, qmc

from .errors import DimensionMismatchError, UnsupportedDimensionError, ZeroVectorError

ZERO_NORM = 1e-300


@dataclass(frozen=True, eq=False)
class UnitVector:
    """A point on the q-sphere.

    Construction always renormalises, so iterates that drift at the 1e-16 scale
    are accepted as-is.
    """
    coords: np.ndarray

    def __post_init__(self):
        v = np.array(self.coords, dtype=float).reshape(-1)
        if v.size < 2:
            raise UnsupportedDimensionError(
                f"Unit vectors need at least 2 coordinates, got {v.size}"
            )
        n = float(np.linalg.norm(v))
        if not np.isfinite(n) or n <= ZERO_NORM:
            raise ZeroVectorError(f"Cannot normalise vector with norm {n!r}")
        v = v / n
        v.setflags(write=False)
        object.__setattr__(self, "coords", v)

    @property
    def dim_q(self) -> int:
        return self.coords.size - 1

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)

    def __len__(self) -> int:
        return self.coords.size

    def __repr__(self) -> str:
        return f"UnitVector({np.array2string(self.coords, precision=6)})"


PointLike = Union[UnitVector, ArrayLike]


def as_coords(x: PointLike, dim: int | None = None) -> np.ndarray:
    """Coordinates of a point as a 1-D float array, optionally checking ambient size."""
    v = x.coords if isinstance(x, UnitVector) else np.asarray(x, dtype=float).reshape(-1)
    if dim is not None and v.size != dim:
        raise DimensionMismatchError(f"Expected {dim} coordinates, got {v.size}")
    return v


def as_points(points: ArrayLike, dim: int | None = None) -> np.ndarray:
    """Stack points into an (m, d) array without renormalising."""
    if isinstance(points, UnitVector):
        arr = points.coords[None, :]
    elif isinstance(points, np.ndarray):
        arr = np.atleast_2d(points.astype(float, copy=False))
    else:
        arr = np.atleast_2d(np.array([as_coords(p) for p in points], dtype=float))
    if dim is not None and arr.shape[1] != dim:
        raise DimensionMismatchError(f"Expected {dim} coordinates, got {arr.shape[1]}")
    return arr


def normalize(v: ArrayLike) -> UnitVector:
    """Project a non-zero vector onto the sphere; raises ZeroVectorError otherwise."""
    return UnitVector(np.asarray(v, dtype=float))


def normalize_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise normalisation; rows with zero norm raise ZeroVectorError."""
    a = np.asarray(a, dtype=float)
    norms = np.linalg.norm(a, axis=1)
    if np.any(norms <= ZERO_NORM):
        bad = int(np.argmax(norms <= ZERO_NORM))
        raise ZeroVectorError(f"Row {bad} has zero norm")
    return a / norms[:, None]


def _matching(x: PointLike, y: PointLike) -> Tuple[np.ndarray, np.ndarray]:
    a, b = as_coords(x), as_coords(y)
    if a.size != b.size:
        raise DimensionMismatchError(f"Points on different spheres: {a.size} vs {b.size}")
    return a, b


def geodesic_distance(x: PointLike, y: PointLike) -> float:
    """Great-circle distance in radians, in [0, pi]."""
    a, b = _matching(x, y)
    return float(np.arccos(np.clip(a @ b, -1.0, 1.0)))


def geodesic_distances(points: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Pairwise great-circle distances between two batches, shape (m, k)."""
    cos = np.einsum("ij,kj->ik", points, anchors)
    return np.arccos(np.clip(cos, -1.0, 1.0))


def tangent_project(x: PointLike, v: ArrayLike) -> np.ndarray:
    """(I - x x^T) v: the component of v tangent to the sphere at x."""
    a, w = _matching(x, v)
    return w - a * (a @ w)


def lonlat_to_unit(lon_deg: float, lat_deg: float) -> UnitVector:
    """Longitude/latitude in degrees to a point on the 2-sphere."""
    if not -90.0 <= lat_deg <= 90.0:
        raise ValueError(f"Latitude must lie in [-90, 90], got {lat_deg}")
    lon, lat = np.radians(lon_deg), np.radians(lat_deg)
    return UnitVector(np.array([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)]))


def unit_to_lonlat(x: PointLike) -> Tuple[float, float]:
    """Inverse of lonlat_to_unit; lon in (-180, 180], lat in [-90, 90]."""
    v = as_coords(x)
    if v.size != 3:
        raise UnsupportedDimensionError(f"Longitude/latitude needs q = 2, got q = {v.size - 1}")
    v = v / np.linalg.norm(v)
    lat = float(np.degrees(np.arcsin(np.clip(v[2], -1.0, 1.0))))
    lon = float(np.degrees(np.arctan2(v[1], v[0])))
    if lon <= -180.0:
        lon += 360.0
    return lon, lat


def lonlat_array_to_unit(lonlat_deg: np.ndarray) -> np.ndarray:
    """Vectorised lonlat_to_unit for an (m, 2) array of degrees."""
    lonlat = np.radians(np.asarray(lonlat_deg, dtype=float))
    lon, lat = lonlat[:, 0], lonlat[:, 1]
    return np.column_stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])


def lonlat_grid(step_deg: float) -> Tuple[np.ndarray, np.ndarray]:
    """Regular grid over lon in (-180, 180], lat in [-90, 90].

    Returns (lonlat, points) with lonlat of shape (m, 2) in degrees.
    """
    if step_deg <= 0:
        raise ValueError(f"Grid step must be positive, got {step_deg}")
    lons = np.arange(180.0, -180.0, -step_deg)[::-1]
    lats = np.arange(-90.0, 90.0 + 1e-9, step_deg)
    lat_g, lon_g = np.meshgrid(lats, lons, indexing="ij")
    lonlat = np.column_stack([lon_g.ravel(), lat_g.ravel()])
    return lonlat, lonlat_array_to_unit(lonlat)


def fibonacci_sphere(count: int) -> np.ndarray:
    """Fibonacci lattice of `count` nearly evenly spread points on the 2-sphere."""
    k = np.arange(count) + 0.5
    z = 1.0 - 2.0 * k / count
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * k
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def lattice_starts(q: int, count: int) -> np.ndarray:
    """Deterministic space-filling points on the q-sphere."""
    if q < 1:
        raise UnsupportedDimensionError(f"Sphere dimension must be >= 1, got {q}")
    if q == 1:
        theta = 2.0 * np.pi * (np.arange(count) + 0.5) / count
        return np.column_stack([np.cos(theta), np.sin(theta)])
    if q == 2:
        return fibonacci_sphere(count)
    sampler = qmc.Halton(d=q + 1, scramble=True, seed=0)
    u = np.clip(sampler.random(count), 1e-12, 1.0 - 1e-12)
    return normalize_rows(norm.ppf(u))
