"""Scan registration on SE(2) by iterative correspondence + Gauss-Newton.

Each source surface point is paired with its nearest neighbor in the target
set (one pair per source point at most), then the pose minimizing the summed
point-to-line or point-to-point residuals is refined one Gauss-Newton step
at a time, re-associating every iteration. Residuals pass through a Huber
loss so a few bad pairs cannot capture the solve; huber_delta=inf recovers
the plain half-squared loss.

Point-to-line residual for a pair (mu_s, mu_t, n_t):

    e = n_t . (T(x) mu_s - mu_t)

with Jacobian row [n_x, n_y, n . (dR/dtheta mu_s)]. Point-to-point stacks
the 2-vector residual T(x) mu_s - mu_t instead, robust-weighted per pair by
its norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import Pose2, normalize_angle, transform_points
from .surface import SurfacePointSet


class Metric(str, Enum):
    P2L = "p2l"
    P2P = "p2p"


class RegistrationError(Exception):
    """Base class; the pipeline dead-reckons through these."""


class TooFewCorrespondences(RegistrationError):
    pass


class SingularNormalEquations(RegistrationError):
    pass


@dataclass(frozen=True)
class RegistrationParams:
    metric: Metric = Metric.P2L
    association_radius: float | None = None  # None: use the surface resolution
    max_iterations: int = 50
    translation_tolerance: float = 1e-3
    rotation_tolerance: float = 1e-4
    min_correspondences: int = 10
    huber_delta: float = 0.1

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.translation_tolerance <= 0 or self.rotation_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.huber_delta <= 0:
            raise ValueError("huber_delta must be positive")


@dataclass(frozen=True)
class Correspondences:
    """Index pairs (source i -> target j) plus the arrays the solver needs."""

    source_index: np.ndarray
    target_index: np.ndarray
    source_means: np.ndarray
    target_means: np.ndarray
    target_normals: np.ndarray

    def __len__(self) -> int:
        return len(self.source_index)


@dataclass(frozen=True)
class RegistrationResult:
    pose: Pose2
    converged: bool
    iterations: int
    final_cost: float
    num_correspondences: int


def associate(
    source: SurfacePointSet, target: SurfacePointSet, x: Pose2, radius: float
) -> Correspondences:
    """Nearest target point within radius for each transformed source point."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    moved = transform_points(x, source.means)
    tgt = target.grid.nearest_within_batch(moved, radius)
    mask = tgt >= 0
    src_idx = np.flatnonzero(mask)
    tgt_idx = tgt[mask]
    return Correspondences(
        src_idx,
        tgt_idx,
        source.means[src_idx],
        target.means[tgt_idx],
        target.normals[tgt_idx],
    )


def _huber_rho(e: np.ndarray, delta: float) -> np.ndarray:
    """Huber loss with quadratic core: e^2/2 inside delta."""
    if math.isinf(delta):
        return 0.5 * e * e
    a = np.abs(e)
    return np.where(a <= delta, 0.5 * e * e, delta * (a - 0.5 * delta))


def _huber_weight(e: np.ndarray, delta: float) -> np.ndarray:
    """IRLS weight rho'(e)/e for the Huber loss."""
    if math.isinf(delta):
        return np.ones_like(e)
    a = np.abs(e)
    return np.where(a <= delta, 1.0, delta / np.maximum(a, 1e-300))


def residuals_and_jacobian(
    pairs: Correspondences, x: Pose2, metric: Metric
) -> tuple[np.ndarray, np.ndarray]:
    """Residual vector and its analytic Jacobian w.r.t. (x, y, theta).

    P2L: one row per pair. P2P: two stacked rows per pair (x then y
    component), so the Jacobian is (2N, 3).
    """
    mu = pairs.source_means
    c, s = math.cos(x.theta), math.sin(x.theta)
    moved_x = x.x + c * mu[:, 0] - s * mu[:, 1]
    moved_y = x.y + s * mu[:, 0] + c * mu[:, 1]
    drot_x = -s * mu[:, 0] - c * mu[:, 1]
    drot_y = c * mu[:, 0] - s * mu[:, 1]
    ex = moved_x - pairs.target_means[:, 0]
    ey = moved_y - pairs.target_means[:, 1]
    if metric == Metric.P2L:
        n = pairs.target_normals
        r = n[:, 0] * ex + n[:, 1] * ey
        jac = np.stack([n[:, 0], n[:, 1], n[:, 0] * drot_x + n[:, 1] * drot_y], axis=1)
        return r, jac
    npairs = len(mu)
    r = np.empty(2 * npairs)
    r[0::2] = ex
    r[1::2] = ey
    jac = np.zeros((2 * npairs, 3))
    jac[0::2, 0] = 1.0
    jac[1::2, 1] = 1.0
    jac[0::2, 2] = drot_x
    jac[1::2, 2] = drot_y
    return r, jac


def _robust_residual_magnitudes(r: np.ndarray, metric: Metric) -> np.ndarray:
    """Per-pair residual magnitude the Huber loss acts on."""
    if metric == Metric.P2L:
        return np.abs(r)
    return np.hypot(r[0::2], r[1::2])


def cost(pairs: Correspondences, x: Pose2, metric: Metric, huber_delta: float = math.inf) -> float:
    """Summed robust loss of all pair residuals at pose x."""
    if len(pairs) == 0:
        return 0.0
    r, _ = residuals_and_jacobian(pairs, x, metric)
    mags = _robust_residual_magnitudes(r, metric)
    return float(np.sum(_huber_rho(mags, huber_delta)))


def solve_step(
    pairs: Correspondences, x: Pose2, metric: Metric, huber_delta: float = math.inf
) -> tuple[np.ndarray, float]:
    """One Gauss-Newton step: returns (delta, predicted cost drop).

    delta is the additive increment (dx, dy, dtheta). Raises
    SingularNormalEquations when the 3x3 normal system is rank-deficient,
    e.g. when every target normal is parallel (a single straight wall).
    """
    r, jac = residuals_and_jacobian(pairs, x, metric)
    mags = _robust_residual_magnitudes(r, metric)
    w = _huber_weight(mags, huber_delta)
    if metric == Metric.P2P:
        w = np.repeat(w, 2)
    jw = jac * w[:, None]
    h = jac.T @ jw
    g = jw.T @ r
    eigs = np.linalg.eigvalsh(h)
    if eigs[-1] <= 0.0 or eigs[0] / eigs[-1] < 1e-12:
        raise SingularNormalEquations(
            f"normal equations rank-deficient (eigenvalues {eigs.tolist()})"
        )
    delta = np.linalg.solve(h, -g)
    predicted_drop = float(-(g @ delta) - 0.5 * delta @ h @ delta)
    return delta, predicted_drop


def _apply_delta(x: Pose2, delta: np.ndarray, scale: float = 1.0) -> Pose2:
    return Pose2(
        x.x + scale * delta[0],
        x.y + scale * delta[1],
        normalize_angle(x.theta + scale * delta[2]),
    )


# Step halving bound when a Gauss-Newton step increases the robust cost.
MAX_STEP_HALVINGS = 10


def register(
    source: SurfacePointSet,
    target: SurfacePointSet,
    x0: Pose2,
    params: RegistrationParams,
) -> RegistrationResult:
    """Estimate the pose aligning source onto target, starting from x0.

    Alternates association and one damped Gauss-Newton step until the
    accepted step falls below both tolerances or the iteration budget runs
    out. Raises TooFewCorrespondences when an iteration cannot pair at least
    min_correspondences source points.
    """
    radius = params.association_radius
    if radius is None:
        raise ValueError("association_radius must be resolved before register()")
    x = x0
    converged = False
    iterations = 0
    pairs = associate(source, target, x, radius)
    for iterations in range(1, params.max_iterations + 1):
        if len(pairs) < params.min_correspondences:
            raise TooFewCorrespondences(
                f"{len(pairs)} correspondences < minimum {params.min_correspondences}"
            )
        delta, _ = solve_step(pairs, x, params.metric, params.huber_delta)
        base_cost = cost(pairs, x, params.metric, params.huber_delta)
        scale = 1.0
        accepted = None
        for _ in range(MAX_STEP_HALVINGS + 1):
            trial = _apply_delta(x, delta, scale)
            if cost(pairs, trial, params.metric, params.huber_delta) <= base_cost:
                accepted = trial
                break
            scale *= 0.5
        if accepted is None:
            break  # no usable descent direction left
        x = accepted
        if (
            math.hypot(scale * delta[0], scale * delta[1]) < params.translation_tolerance
            and abs(scale * delta[2]) < params.rotation_tolerance
        ):
            converged = True
            break
        pairs = associate(source, target, x, radius)

    final_cost = cost(pairs, x, params.metric, params.huber_delta)
    return RegistrationResult(x, converged, iterations, final_cost, len(pairs))
