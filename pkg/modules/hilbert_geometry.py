"""
Finite-dimensional truncation of l2.

Points are 1-D numpy arrays of length d. Pursuer starts in the worked example
are one-hot, so a SparsePoint form is accepted wherever a start position is
stored; every public operation takes and returns dense coordinates.
"""

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np
import scipy.sparse as sp

from utils.config import config

logger = logging.getLogger(__name__)

# Above this many scalar products the batched distance routine switches from
# explicit differences to the ||z||^2 + ||x||^2 - 2(z, x) expansion.
EXACT_DISTANCE_BUDGET = 4_000_000


class GeometryError(ValueError):
    """Rejected geometric input (dimension mismatch, non-finite values, ...)."""


@dataclass(frozen=True)
class SparsePoint:
    """A point stored as its nonzero coordinates."""
    dimension: int
    indices: tuple
    values: tuple

    def __post_init__(self):
        if self.dimension < 1:
            raise GeometryError(f"dimension must be >= 1, got {self.dimension}")
        if len(self.indices) != len(self.values):
            raise GeometryError("sparse point needs one value per index")
        for index in self.indices:
            if not 0 <= index < self.dimension:
                raise GeometryError(f"sparse index {index} outside [0, {self.dimension})")
        if not np.all(np.isfinite(np.asarray(self.values, dtype=float))):
            raise GeometryError("sparse point has non-finite coordinates")

    def to_dense(self) -> np.ndarray:
        coords = np.zeros(self.dimension)
        coords[list(self.indices)] = self.values
        return coords

    @property
    def norm_sq(self) -> float:
        return float(np.sum(np.square(self.values)))


PointLike = Union[np.ndarray, Sequence[float], SparsePoint]


def as_point(coords: PointLike, dimension: int = None) -> np.ndarray:
    """Validate coordinates and return them as a read-only dense vector."""
    if isinstance(coords, SparsePoint):
        arr = coords.to_dense()
    else:
        arr = np.array(coords, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise GeometryError(f"a point is a non-empty coordinate list, got shape {arr.shape}")
    if dimension is not None and arr.size != dimension:
        raise GeometryError(f"expected dimension {dimension}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("point has non-finite coordinates")
    arr.setflags(write=False)
    return arr


def sparse_point(dimension: int, entries: Mapping[int, float]) -> SparsePoint:
    """Build a SparsePoint from an {index: value} mapping (zeros dropped)."""
    items = sorted((int(k), float(v)) for k, v in entries.items() if float(v) != 0.0)
    return SparsePoint(dimension, tuple(k for k, _ in items), tuple(v for _, v in items))


def dimension_of(p: PointLike) -> int:
    if isinstance(p, SparsePoint):
        return p.dimension
    return int(np.asarray(p).size)


def _same_dimension(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise GeometryError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


def inner(a: PointLike, b: PointLike) -> float:
    """Euclidean inner product sum_k a_k b_k."""
    a, b = as_point(a), as_point(b)
    _same_dimension(a, b)
    return float(np.dot(a, b))


def norm(a: PointLike) -> float:
    return float(np.linalg.norm(as_point(a)))


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not np.isfinite(self.radius) or self.radius < 0:
            raise GeometryError(f"ball radius must be finite and >= 0, got {self.radius}")
        object.__setattr__(self, 'center', as_point(self.center))


@dataclass(frozen=True)
class HalfSpace:
    """The set {z : 2 (normal, z) <= offset}."""
    normal: np.ndarray
    offset: float

    def __post_init__(self):
        if not np.isfinite(self.offset):
            raise GeometryError("half-space offset must be finite")
        object.__setattr__(self, 'normal', as_point(self.normal))

    def slack(self, z: PointLike) -> float:
        """offset - 2 (normal, z); nonnegative inside."""
        return float(self.offset - 2.0 * inner(self.normal, z))


def _check_tol(tol: float) -> None:
    if tol < 0:
        raise GeometryError(f"tolerance must be >= 0, got {tol}")


def ball_contains(b: Ball, z: PointLike, tol: float = config.CONTAINMENT_TOL) -> bool:
    _check_tol(tol)
    z = as_point(z)
    _same_dimension(b.center, z)
    return bool(np.linalg.norm(z - b.center) <= b.radius + tol)


def halfspace_contains(h: HalfSpace, z: PointLike, tol: float = config.CONTAINMENT_TOL) -> bool:
    _check_tol(tol)
    return bool(2.0 * inner(h.normal, z) <= h.offset + tol)


def sphere_sample(center: PointLike, radius: float, count: int, seed: int) -> np.ndarray:
    """
    Seeded sample of the sphere S(center, radius), one point per row.

    Directions are normalized standard Gaussians, so the sample is uniform on
    the sphere; in one dimension it is drawn from {center - r, center + r}.
    """
    center = as_point(center)
    if radius < 0:
        raise GeometryError(f"sphere radius must be >= 0, got {radius}")
    if count < 1:
        raise GeometryError(f"sample count must be >= 1, got {count}")
    if radius == 0:
        return np.tile(center, (count, 1))

    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((count, center.size))
    lengths = np.linalg.norm(directions, axis=1)
    # a zero Gaussian draw has probability zero; fall back to the first axis
    degenerate = lengths == 0
    directions[degenerate] = 0.0
    directions[degenerate, 0] = 1.0
    lengths[degenerate] = 1.0
    return center + radius * directions / lengths[:, None]


def ball_sample(center: PointLike, radius: float, count: int, seed: int) -> np.ndarray:
    """Seeded uniform sample of the closed ball B(center, radius)."""
    center = as_point(center)
    if count < 1:
        raise GeometryError(f"sample count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    on_sphere = sphere_sample(np.zeros(center.size), 1.0, count, int(rng.integers(2**31)))
    scale = radius * rng.random(count) ** (1.0 / center.size)
    return center + on_sphere * scale[:, None]


def project_to_ball(points: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Radial projection of each row onto the closed ball."""
    offsets = points - center
    lengths = np.linalg.norm(offsets, axis=-1, keepdims=True)
    shrink = np.where(lengths > radius, radius / np.maximum(lengths, 1e-300), 1.0)
    return center + offsets * shrink


def project_to_sphere(points: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """
    Radial projection of each row onto the sphere.

    Rows sitting exactly at the center go to center + radius * e_0.
    """
    offsets = np.array(points - center, dtype=float, ndmin=2)
    lengths = np.linalg.norm(offsets, axis=1)
    at_center = lengths == 0
    offsets[at_center, 0] = 1.0
    lengths[at_center] = 1.0
    projected = center + radius * offsets / lengths[:, None]
    return projected.reshape(np.shape(points)) if np.ndim(points) == 1 else projected


def stack_centers(points: Sequence[PointLike], dimension: int):
    """
    Stack start positions into an (N, d) matrix.

    A CSR matrix is used when every point is sparse and the dense matrix
    would be large; otherwise a dense array.
    """
    if all(isinstance(p, SparsePoint) for p in points) and len(points) * dimension > 1_000_000:
        rows, cols, vals = [], [], []
        for n, p in enumerate(points):
            rows.extend([n] * len(p.indices))
            cols.extend(p.indices)
            vals.extend(p.values)
        return sp.csr_matrix((vals, (rows, cols)), shape=(len(points), dimension))
    dense = np.vstack([as_point(p, dimension) for p in points])
    dense.setflags(write=False)
    return dense


def center_rows(centers, idx) -> np.ndarray:
    """Dense copies of the selected rows of a dense or CSR center matrix."""
    if sp.issparse(centers):
        return centers[np.atleast_1d(idx)].toarray()
    return np.array(centers[np.atleast_1d(idx)], dtype=float)


def squared_norms(centers) -> np.ndarray:
    if sp.issparse(centers):
        return np.asarray(centers.multiply(centers).sum(axis=1)).ravel()
    return np.einsum('ij,ij->i', centers, centers)


def squared_distances(points: np.ndarray, centers, center_sq: np.ndarray = None) -> np.ndarray:
    """Matrix of ||z_b - x_n||^2 for rows z_b of `points` and rows x_n of `centers`."""
    points = np.atleast_2d(points)
    n_points, dim = points.shape
    if centers.shape[1] != dim:
        raise GeometryError(f"dimension mismatch: {dim} vs {centers.shape[1]}")

    if not sp.issparse(centers) and n_points * centers.shape[0] * dim <= EXACT_DISTANCE_BUDGET:
        diff = points[:, None, :] - centers[None, :, :]
        return np.einsum('bnk,bnk->bn', diff, diff)

    if center_sq is None:
        center_sq = squared_norms(centers)
    cross = np.asarray((centers @ points.T)).T
    point_sq = np.einsum('ij,ij->i', points, points)
    return np.maximum(point_sq[:, None] + center_sq[None, :] - 2.0 * cross, 0.0)
