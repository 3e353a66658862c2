"""Incremental radar odometry: filter, compensate, model, register, re-key.

Each sweep is reduced to oriented surface points and registered against the
nearest keyframe, starting from a constant-velocity prediction. The global
pose and velocity update from the result; once the sensor has travelled
beyond the keyframe distance, the current surface points become the new
keyframe. Registration failures fall back to dead reckoning for that frame
so a stream never halts.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

from .geometry import (
    IDENTITY,
    Pose2,
    advance,
    body_twist_between,
    compose,
    inverse,
    normalize_angle,
)
from .io import TrajectoryEstimate
from .polar_filter import FilterParams, PolarScan, RadarPointCloud, filter_scan
from .registration import RegistrationError, RegistrationParams, register
from .surface import SurfaceParams, build_surface_points, motion_compensate


@dataclass(frozen=True)
class OdometryParams:
    filter: FilterParams = field(default_factory=FilterParams)
    surface: SurfaceParams = field(default_factory=SurfaceParams)
    registration: RegistrationParams = field(default_factory=RegistrationParams)
    keyframe_distance: float = 1.5
    compensate_motion: bool = True

    def __post_init__(self):
        if self.keyframe_distance <= 0:
            raise ValueError("keyframe_distance must be positive")

    def resolved_registration(self) -> RegistrationParams:
        """Registration params with the association radius defaulted to r."""
        if self.registration.association_radius is not None:
            return self.registration
        return replace(self.registration, association_radius=self.surface.resolution)


@dataclass(frozen=True)
class Keyframe:
    set: SurfacePointSet
    global_pose: Pose2
    timestamp: float
    index: int


@dataclass(frozen=True)
class FrameDiagnostics:
    frame: int
    timestamp: float
    pose: Pose2
    stage_filter_ms: float
    stage_surface_ms: float
    stage_register_ms: float
    total_ms: float
    iterations: int
    correspondences: int
    keyframe_id: int
    keyframe_created: bool
    registration_failed: bool
    num_points: int
    num_surface_points: int
    final_cost: float


def update_velocity(x_t: Pose2, x_prev: Pose2, dt: float) -> Pose2:
    """Global-frame rate (x_t - x_prev) / dt; angle difference wrapped first."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return Pose2(
        (x_t.x - x_prev.x) / dt,
        (x_t.y - x_prev.y) / dt,
        normalize_angle(x_t.theta - x_prev.theta) / dt,
    )


def select_keyframe(keyframes: list[Keyframe], predicted: Pose2) -> Keyframe:
    """Keyframe closest (Euclidean) to the predicted position; ties -> newest."""
    if not keyframes:
        raise ValueError("no keyframes to select from")
    best = keyframes[0]
    best_d = math.hypot(best.global_pose.x - predicted.x, best.global_pose.y - predicted.y)
    for kf in keyframes[1:]:
        d = math.hypot(kf.global_pose.x - predicted.x, kf.global_pose.y - predicted.y)
        if d <= best_d:
            best, best_d = kf, d
    return best


class RadarOdometry:
    """Sequential odometry over one scan stream.

    Not thread-safe: process_scan mutates the state. Independent streams are
    independent objects.
    """

    def __init__(self, params: OdometryParams | None = None):
        self.params = params or OdometryParams()
        self.current_pose = IDENTITY
        self.previous_pose = IDENTITY
        self.velocity = Pose2(0.0, 0.0, 0.0)
        self.keyframes: list[Keyframe] = []
        self.last_timestamp: float | None = None
        self.frame_index = -1
        # Keyframes built before any velocity estimate exists carry raw
        # motion distortion; their clouds are stashed so they can be
        # re-compensated once the first velocity estimate arrives.
        self._velocity_known = False
        self._last_dt: float | None = None
        self._uncompensated_keyframes: list[tuple[int, RadarPointCloud]] = []

    def _sweep_twist(self) -> Pose2 | None:
        """Body-frame rate for in-sweep compensation, from the last two poses."""
        if not self._velocity_known or self._last_dt is None:
            return None
        return body_twist_between(self.previous_pose, self.current_pose, self._last_dt)

    def _recompensate_early_keyframes(self, sweep_period: float) -> None:
        """Rebuild pre-velocity keyframes with the freshly estimated rate.

        Constant velocity is extrapolated backward over those sweeps, same
        small-acceleration assumption as the forward compensation.
        """
        twist = self._sweep_twist()
        if twist is None:
            return
        for index, cloud in self._uncompensated_keyframes:
            fixed = motion_compensate(cloud, twist, sweep_period)
            old = self.keyframes[index]
            sset = build_surface_points(fixed, self.params.surface, old.global_pose)
            if not sset.is_empty:
                self.keyframes[index] = Keyframe(sset, old.global_pose, old.timestamp, index)
        self._uncompensated_keyframes.clear()

    def process_scan(self, scan: PolarScan) -> FrameDiagnostics:
        t_start = time.perf_counter()
        self.frame_index += 1
        first = self.last_timestamp is None
        if not first and scan.timestamp <= self.last_timestamp:
            raise ValueError("scan timestamps must be strictly increasing")
        dt = 0.0 if first else scan.timestamp - self.last_timestamp
        predicted = self.current_pose if first else advance(self.current_pose, self.velocity, dt)

        t0 = time.perf_counter()
        cloud = filter_scan(scan, self.params.filter)
        t1 = time.perf_counter()

        if self.params.compensate_motion and not first and len(cloud):
            twist = self._sweep_twist()
            if twist is not None:
                cloud = motion_compensate(cloud, twist, scan.sweep_period)
        sset = build_surface_points(cloud, self.params.surface)
        t2 = time.perf_counter()

        iterations = 0
        correspondences = 0
        final_cost = math.nan
        failed = False
        keyframe_id = -1
        if first:
            new_pose = IDENTITY
        elif not self.keyframes:
            # Nothing to register against yet (degenerate start); dead-reckon.
            new_pose = predicted
            failed = not sset.is_empty
        else:
            kf = select_keyframe(self.keyframes, predicted)
            keyframe_id = kf.index
            x0 = compose(inverse(kf.global_pose), predicted)
            try:
                result = register(sset, kf.set, x0, self.params.resolved_registration())
                new_pose = compose(kf.global_pose, result.pose)
                iterations = result.iterations
                correspondences = result.num_correspondences
                final_cost = result.final_cost
            except RegistrationError:
                new_pose = predicted
                failed = True
        t3 = time.perf_counter()

        velocity_known_at_build = self._velocity_known
        became_known = False
        if not first:
            self.velocity = update_velocity(new_pose, self.current_pose, dt)
            self._last_dt = dt
            became_known = not failed and not self._velocity_known
        self.previous_pose = self.current_pose
        self.current_pose = new_pose
        self.last_timestamp = scan.timestamp

        keyframe_created = False
        if not sset.is_empty:
            if not self.keyframes:
                keyframe_created = True
            else:
                active = self.keyframes[keyframe_id] if keyframe_id >= 0 else self.keyframes[-1]
                gap = math.hypot(
                    new_pose.x - active.global_pose.x, new_pose.y - active.global_pose.y
                )
                keyframe_created = gap > self.params.keyframe_distance
        if keyframe_created:
            sset = sset.with_frame_pose(new_pose)
            self.keyframes.append(Keyframe(sset, new_pose, scan.timestamp, len(self.keyframes)))
            if keyframe_id < 0:
                keyframe_id = self.keyframes[-1].index
            if not velocity_known_at_build:
                self._uncompensated_keyframes.append((self.keyframes[-1].index, cloud))
        if became_known:
            self._velocity_known = True
            self._recompensate_early_keyframes(scan.sweep_period)

        t_end = time.perf_counter()
        # State upkeep after registration is surface-model work (keyframe
        # sets, early-keyframe recompensation); bill it to that stage so the
        # stage columns partition the total.
        return FrameDiagnostics(
            frame=self.frame_index,
            timestamp=scan.timestamp,
            pose=new_pose,
            stage_filter_ms=(t1 - t0) * 1e3,
            stage_surface_ms=(t2 - t1 + (t_end - t3)) * 1e3,
            stage_register_ms=(t3 - t2) * 1e3,
            total_ms=(t_end - t_start) * 1e3,
            iterations=iterations,
            correspondences=correspondences,
            keyframe_id=keyframe_id,
            keyframe_created=keyframe_created,
            registration_failed=failed,
            num_points=len(cloud),
            num_surface_points=len(sset),
            final_cost=final_cost,
        )


def run_odometry(scans, params: OdometryParams | None = None):
    """Process a scan sequence; returns (TrajectoryEstimate, diagnostics list)."""
    odo = RadarOdometry(params)
    diagnostics = []
    stamps = []
    poses = []
    for scan in scans:
        diag = odo.process_scan(scan)
        diagnostics.append(diag)
        stamps.append(scan.timestamp)
        poses.append(diag.pose)
    return TrajectoryEstimate.from_poses(stamps, poses), diagnostics
