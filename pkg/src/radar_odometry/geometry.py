"""SE(2) pose algebra and closed-form 2x2 symmetric eigendecomposition.

Poses are (x, y, theta) with theta in radians; points are length-2 float
arrays and point clouds are (N, 2) arrays. Everything here is a pure
function over immutable values, safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi

# Ratio lambda_min/lambda_max above which a 2x2 spectrum is considered
# isotropic (no meaningful dominant direction).
DEFAULT_ISOTROPY_THRESHOLD = 0.9


def normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = math.remainder(theta, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


def normalize_angles(theta: np.ndarray) -> np.ndarray:
    """Vectorized wrap to (-pi, pi]."""
    r = np.remainder(np.asarray(theta, dtype=float) + math.pi, TWO_PI) - math.pi
    return np.where(r <= -math.pi, r + TWO_PI, r)


@dataclass(frozen=True)
class Pose2:
    """Rigid transform on the plane.

    theta is not normalized on construction: the same triple doubles as a
    velocity (vx, vy, omega), where wrapping the rate would be wrong.
    Operations that return a transform always normalize.
    """

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def to_matrix(self) -> np.ndarray:
        """3x3 homogeneous matrix of the transform."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s, self.x], [s, c, self.y], [0.0, 0.0, 1.0]])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y])


IDENTITY = Pose2()


def compose(a: Pose2, b: Pose2) -> Pose2:
    """Composite transform applying b first, then a."""
    ca, sa = math.cos(a.theta), math.sin(a.theta)
    return Pose2(
        a.x + ca * b.x - sa * b.y,
        a.y + sa * b.x + ca * b.y,
        normalize_angle(a.theta + b.theta),
    )


def inverse(p: Pose2) -> Pose2:
    c, s = math.cos(p.theta), math.sin(p.theta)
    return Pose2(
        -(c * p.x + s * p.y),
        -(-s * p.x + c * p.y),
        normalize_angle(-p.theta),
    )


def transform_point(p: Pose2, v) -> np.ndarray:
    """Rotate v by p.theta, then translate by (p.x, p.y)."""
    c, s = math.cos(p.theta), math.sin(p.theta)
    return np.array([p.x + c * v[0] - s * v[1], p.y + s * v[0] + c * v[1]])


def transform_points(p: Pose2, xy: np.ndarray) -> np.ndarray:
    """Apply p to each row of an (N, 2) array."""
    xy = np.asarray(xy, dtype=float)
    c, s = math.cos(p.theta), math.sin(p.theta)
    out = xy @ np.array([[c, s], [-s, c]])
    out[:, 0] += p.x
    out[:, 1] += p.y
    return out


def advance(pose: Pose2, velocity: Pose2, dt: float) -> Pose2:
    """Constant-velocity extrapolation of a global pose by dt seconds."""
    return Pose2(
        pose.x + velocity.x * dt,
        pose.y + velocity.y * dt,
        normalize_angle(pose.theta + velocity.theta * dt),
    )


def body_twist_between(a: Pose2, b: Pose2, dt: float) -> Pose2:
    """Constant body-frame twist carrying a to b over dt seconds.

    On a turning path this differs from rotating the global displacement by
    either endpoint heading: the chord must be mapped back through the
    SE(2) Jacobian so the rate reproduces the observed arc.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rel = compose(inverse(a), b)
    phi = rel.theta
    if abs(phi) < 1e-12:
        vx, vy = rel.x, rel.y
    else:
        # (phi/2) / tan(phi/2): the well-conditioned form of
        # phi*sin(phi) / (2*(1-cos(phi))), stable for tiny phi.
        coef = 0.5 * phi / math.tan(0.5 * phi)
        vx = coef * rel.x + 0.5 * phi * rel.y
        vy = -0.5 * phi * rel.x + coef * rel.y
    return Pose2(vx / dt, vy / dt, phi / dt)


class EigenMin(NamedTuple):
    value: float
    vector: np.ndarray
    degenerate: bool


def eigen_min(m: np.ndarray, isotropy_threshold: float = DEFAULT_ISOTROPY_THRESHOLD) -> EigenMin:
    """Smallest eigenvalue and unit eigenvector of a symmetric 2x2 matrix.

    Uses the closed-form half-angle solution. When the spectrum is close to
    isotropic (lambda_min/lambda_max > isotropy_threshold, including repeated
    eigenvalues) any unit vector is as good as another; the returned vector is
    still valid but ``degenerate`` is set so callers can reject it.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2):
        raise ValueError("eigen_min expects a 2x2 matrix")
    if not math.isclose(m[0, 1], m[1, 0], rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError("eigen_min expects a symmetric matrix")
    values, vectors, degenerate = smallest_eigen(
        np.array([m[0, 0]]), np.array([m[0, 1]]), np.array([m[1, 1]]), isotropy_threshold
    )
    return EigenMin(float(values[0]), vectors[0], bool(degenerate[0]))


def smallest_eigen(
    a11: np.ndarray,
    a12: np.ndarray,
    a22: np.ndarray,
    isotropy_threshold: float = DEFAULT_ISOTROPY_THRESHOLD,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized closed-form smallest eigenpair of symmetric 2x2 matrices.

    Inputs are the upper-triangle entries as equal-length arrays. Returns
    (values, unit vectors as (N, 2), degeneracy flags). The eigenvector of the
    larger eigenvalue points along the half-angle direction
    t = atan2(2*a12, a11 - a22) / 2; the smaller one is its perpendicular.
    """
    a11 = np.asarray(a11, dtype=float)
    a12 = np.asarray(a12, dtype=float)
    a22 = np.asarray(a22, dtype=float)
    mean = 0.5 * (a11 + a22)
    half_diff = 0.5 * (a11 - a22)
    disc = np.sqrt(half_diff * half_diff + a12 * a12)
    lam_min = mean - disc
    lam_max = mean + disc

    t = 0.5 * np.arctan2(2.0 * a12, a11 - a22)
    # Perpendicular of the dominant direction (cos t, sin t).
    vectors = np.stack([-np.sin(t), np.cos(t)], axis=1)

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(
            lam_max != 0.0,
            lam_min / lam_max,
            np.where(lam_min == 0.0, 1.0, -np.inf),
        )
    degenerate = ratio > isotropy_threshold
    return lam_min, vectors, degenerate
