"""Oriented surface points from filtered radar returns.

Space is discretized into a grid of side resolution/2 anchored at the sensor
origin. Around each occupied cell center, all returns within the full
resolution radius contribute a sample mean and a normal (the eigenvector of
the smallest sample-covariance eigenvalue). Cells with too little support or
a near-isotropic spread are rejected. Motion distortion within a sweep is
undone first using the previous velocity estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import IDENTITY, Pose2, compose, inverse, smallest_eigen, transform_points
from .polar_filter import RadarPointCloud
from .spatial import UniformGrid


@dataclass(frozen=True)
class SurfaceParams:
    resolution: float = 3.0
    min_neighbors: int = 6
    isotropy_reject_ratio: float = 0.9

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.min_neighbors < 3:
            raise ValueError("min_neighbors must be >= 3")


@dataclass(frozen=True)
class OrientedSurfacePoint:
    mean: np.ndarray
    normal: np.ndarray
    support_count: int


class SurfacePointSet:
    """Immutable set of oriented surface points with a radius-query index.

    ``frame_pose`` is the global pose of the sensor frame the coordinates
    live in; the set itself never re-expresses its points.
    """

    def __init__(
        self,
        means: np.ndarray,
        normals: np.ndarray,
        support: np.ndarray,
        frame_pose: Pose2 = IDENTITY,
        index_cell_size: float | None = None,
    ):
        self.means = np.asarray(means, dtype=float).reshape(-1, 2)
        self.normals = np.asarray(normals, dtype=float).reshape(-1, 2)
        self.support = np.asarray(support, dtype=np.intp).reshape(-1)
        if not (len(self.means) == len(self.normals) == len(self.support)):
            raise ValueError("means, normals and support must have equal length")
        self.frame_pose = frame_pose
        if index_cell_size is None:
            index_cell_size = 1.0
        self.grid = UniformGrid(self.means, index_cell_size)

    def __len__(self) -> int:
        return len(self.means)

    @property
    def is_empty(self) -> bool:
        return len(self.means) == 0

    def point(self, i: int) -> OrientedSurfacePoint:
        return OrientedSurfacePoint(self.means[i].copy(), self.normals[i].copy(), int(self.support[i]))

    def with_frame_pose(self, frame_pose: Pose2) -> "SurfacePointSet":
        """Same points and index, different frame bookkeeping."""
        clone = SurfacePointSet.__new__(SurfacePointSet)
        clone.means = self.means
        clone.normals = self.normals
        clone.support = self.support
        clone.frame_pose = frame_pose
        clone.grid = self.grid
        return clone

    def radius_query(self, center, radius: float) -> np.ndarray:
        """Indices of points with ||mean - center|| <= radius, nearest first."""
        if radius <= 0:
            raise ValueError("radius must be positive")
        return self.grid.query_radius(center, radius)


def empty_surface_point_set(frame_pose: Pose2 = IDENTITY) -> SurfacePointSet:
    return SurfacePointSet(np.empty((0, 2)), np.empty((0, 2)), np.empty(0, dtype=np.intp), frame_pose)


def motion_compensate(
    points: RadarPointCloud, velocity: Pose2, sweep_period: float
) -> RadarPointCloud:
    """Re-express every return in the frame of the sweep end.

    ``velocity`` is the sensor-frame rate (vx, vy, omega) assumed constant
    over the sweep. A point captured at relative time tau is moved by the
    inverse of the remaining motion velocity * (sweep_period - tau), where
    the per-sweep motion scales linearly in each of (x, y, theta).
    """
    if len(points) == 0:
        return points
    dt = sweep_period - points.relative_time
    tx = velocity.x * dt
    ty = velocity.y * dt
    ang = velocity.theta * dt
    c = np.cos(ang)
    s = np.sin(ang)
    # Inverse transform: R(-ang) @ (p - t).
    px = points.xy[:, 0] - tx
    py = points.xy[:, 1] - ty
    xy = np.stack([c * px + s * py, -s * px + c * py], axis=1)
    return replace(points, xy=xy)


def build_surface_points(
    points: RadarPointCloud | np.ndarray,
    params: SurfaceParams,
    frame_pose: Pose2 = IDENTITY,
) -> SurfacePointSet:
    """Aggregate a point cloud into oriented surface points.

    For each occupied grid cell (side resolution/2), all points within
    ``resolution`` of the cell center form one candidate. Candidates need at
    least min_neighbors supporting points and a clearly anisotropic sample
    covariance; the normal sign is chosen to face the sensor origin.
    """
    xy = points.xy if isinstance(points, RadarPointCloud) else np.asarray(points, dtype=float)
    if xy.ndim != 2 or (len(xy) and xy.shape[1] != 2):
        raise ValueError("points must be (N, 2)")
    r = params.resolution
    cell = r / 2.0
    if len(xy) == 0:
        return empty_surface_point_set(frame_pose)

    grid = UniformGrid(xy, cell)
    cells = grid.occupied_cells()
    # Radius r reaches exactly two cells beyond the center cell.
    candidate_lists = []
    centers = np.empty((len(cells), 2))
    counts = np.empty(len(cells), dtype=np.intp)
    for i, (cx, cy) in enumerate(cells):
        centers[i] = ((cx + 0.5) * cell, (cy + 0.5) * cell)
        parts = []
        for dx in range(-2, 3):
            for dy in range(-2, 3):
                b = grid._buckets.get((cx + dx, cy + dy))
                if b is not None:
                    parts.append(b)
        cand = np.concatenate(parts)
        candidate_lists.append(cand)
        counts[i] = len(cand)

    flat = np.concatenate(candidate_lists)
    starts = np.append(0, np.cumsum(counts))[:-1]
    # Accumulate relative to each cell center: keeps the sums-of-squares
    # cancellation bounded by the gather radius instead of the range.
    px = xy[flat, 0] - np.repeat(centers[:, 0], counts)
    py = xy[flat, 1] - np.repeat(centers[:, 1], counts)
    inside = (px * px + py * py) <= r * r

    n_in = np.add.reduceat(inside.astype(np.float64), starts)
    wx = np.where(inside, px, 0.0)
    wy = np.where(inside, py, 0.0)
    sx = np.add.reduceat(wx, starts)
    sy = np.add.reduceat(wy, starts)
    sxx = np.add.reduceat(wx * px, starts)
    syy = np.add.reduceat(wy * py, starts)
    sxy = np.add.reduceat(wx * py, starts)

    enough = n_in >= params.min_neighbors
    if not np.any(enough):
        return empty_surface_point_set(frame_pose)
    n = n_in[enough]
    mx = sx[enough] / n
    my = sy[enough] / n
    # Unbiased sample covariance; the divisor cancels in the eigen direction.
    a11 = (sxx[enough] - n * mx * mx) / (n - 1)
    a22 = (syy[enough] - n * my * my) / (n - 1)
    a12 = (sxy[enough] - n * mx * my) / (n - 1)
    mx = mx + centers[enough, 0]
    my = my + centers[enough, 1]

    _, normals, degenerate = smallest_eigen(a11, a12, a22, params.isotropy_reject_ratio)
    keep = ~degenerate
    means = np.stack([mx, my], axis=1)[keep]
    normals = normals[keep]
    support = n[keep].astype(np.intp)
    # Face the sensor origin: flip where n . (origin - mean) < 0.
    flip = np.einsum("ij,ij->i", normals, means) > 0.0
    normals[flip] = -normals[flip]

    return SurfacePointSet(means, normals, support, frame_pose, index_cell_size=r)


def radius_query(sset: SurfacePointSet, center, radius: float) -> np.ndarray:
    """Module-level alias of SurfacePointSet.radius_query."""
    return sset.radius_query(center, radius)


def transform_set(sset: SurfacePointSet, pose: Pose2) -> SurfacePointSet:
    """Re-express a set's coordinates through a rigid transform.

    Means map through the full transform, normals rotate only. The frame
    pose is adjusted so the represented global geometry is unchanged.
    """
    means = transform_points(pose, sset.means)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    normals = sset.normals @ np.array([[c, s], [-s, c]])
    return SurfacePointSet(
        means,
        normals,
        sset.support.copy(),
        compose(sset.frame_pose, inverse(pose)),
        index_cell_size=sset.grid.cell_size,
    )
