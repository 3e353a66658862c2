"""Synthetic rotating-radar generator with ground-truth trajectories.

Worlds are line segments with per-segment reflectivity. Each azimuth ray is
cast from the sensor pose at its own sample time, so a moving sensor bakes
real motion distortion into the sweep. The first segment hit deposits a
Gaussian power bump over nearby range bins (range smearing); speckle is
modeled as an additive noise floor plus per-azimuth dropout. Everything is
seeded and reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import MalformedFile
from .geometry import Pose2, normalize_angle
from .io import TrajectoryEstimate
from .polar_filter import PolarScan, uniform_azimuths

Trajectory = Callable[[float], Pose2]


@dataclass(frozen=True)
class World2D:
    segments: np.ndarray  # (S, 4): x1 y1 x2 y2
    reflectivity: np.ndarray  # (S,) in (0, 1]

    def __post_init__(self):
        segments = np.asarray(self.segments, dtype=float).reshape(-1, 4)
        reflectivity = np.asarray(self.reflectivity, dtype=float).reshape(-1)
        object.__setattr__(self, "segments", segments)
        object.__setattr__(self, "reflectivity", reflectivity)
        if len(segments) != len(reflectivity):
            raise ValueError("one reflectivity per segment required")
        lengths = np.hypot(segments[:, 2] - segments[:, 0], segments[:, 3] - segments[:, 1])
        if np.any(lengths <= 0):
            raise ValueError("segments must have positive length")
        if np.any((reflectivity <= 0) | (reflectivity > 1)):
            raise ValueError("reflectivity must lie in (0, 1]")

    @property
    def num_segments(self) -> int:
        return len(self.segments)


@dataclass(frozen=True)
class SimConfig:
    num_azimuths: int = 200
    num_bins: int = 400
    range_resolution: float = 0.25
    sweep_period: float = 0.25
    noise_floor_mean: float = 5.0
    noise_floor_sd: float = 2.0
    peak_power: float = 100.0
    peak_width: float = 2.0  # Gaussian sigma, in bins
    rng_seed: int = 0
    speckle_dropout_prob: float = 0.0

    def __post_init__(self):
        if min(self.num_azimuths, self.num_bins) < 1:
            raise ValueError("grid dimensions must be positive")
        if min(self.range_resolution, self.sweep_period, self.peak_power, self.peak_width) <= 0:
            raise ValueError("range_resolution, sweep_period, peak_power, peak_width must be positive")
        if self.noise_floor_mean < 0 or self.noise_floor_sd < 0:
            raise ValueError("noise floor parameters must be non-negative")
        if not 0.0 <= self.speckle_dropout_prob < 1.0:
            raise ValueError("speckle_dropout_prob must lie in [0, 1)")

    @property
    def max_range(self) -> float:
        return self.num_bins * self.range_resolution


def first_hit(world: World2D, origins: np.ndarray, directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First-intersection range per ray, plus the hit segment index (-1: none).

    Rays are (origins[i], directions[i]) with unit directions. Intersections
    behind the origin or outside a segment's span do not count.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    nrays = len(origins)
    if world.num_segments == 0:
        return np.full(nrays, np.inf), np.full(nrays, -1, dtype=np.intp)
    a = world.segments[:, 0:2]
    ab = world.segments[:, 2:4] - a
    # Solve o + t d = a + s (b - a) via 2-D cross products.
    ao = a[None, :, :] - origins[:, None, :]
    denom = directions[:, None, 0] * ab[None, :, 1] - directions[:, None, 1] * ab[None, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ao[:, :, 0] * ab[None, :, 1] - ao[:, :, 1] * ab[None, :, 0]) / denom
        s = (ao[:, :, 0] * directions[:, None, 1] - ao[:, :, 1] * directions[:, None, 0]) / denom
    valid = (np.abs(denom) > 1e-300) & (t > 1e-9) & (s >= 0.0) & (s <= 1.0)
    t = np.where(valid, t, np.inf)
    seg = np.argmin(t, axis=1)
    ranges = t[np.arange(nrays), seg]
    seg = np.where(np.isfinite(ranges), seg, -1)
    return ranges, seg.astype(np.intp)


def render_scan(
    world: World2D,
    pose_at: Trajectory,
    start_time: float,
    config: SimConfig,
    seed=None,
) -> PolarScan:
    """Render one sweep starting at start_time; timestamped at the sweep end.

    Azimuth i fires at start_time + sweep_period * i / m from the sensor pose
    at that instant. ``seed`` defaults to config.rng_seed, so repeated calls
    with identical arguments produce identical scans.
    """
    m, n = config.num_azimuths, config.num_bins
    rng = np.random.default_rng(config.rng_seed if seed is None else seed)
    azimuths = uniform_azimuths(m)
    times = start_time + config.sweep_period * np.arange(m) / m
    poses = [pose_at(t) for t in times]
    origins = np.array([[p.x, p.y] for p in poses])
    angles = np.array([p.theta for p in poses]) + azimuths
    directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)

    ranges, seg = first_hit(world, origins, directions)
    # float32 keeps archives compact and makes in-memory and round-tripped
    # scans bit-identical.
    power = rng.normal(config.noise_floor_mean, config.noise_floor_sd, size=(m, n)).astype(np.float32)
    np.clip(power, 0.0, None, out=power)
    dropped = rng.random(m) < config.speckle_dropout_prob

    sigma = config.peak_width
    half = max(1, int(math.ceil(4.0 * sigma)))
    for i in range(m):
        if seg[i] < 0 or dropped[i] or ranges[i] >= config.max_range:
            continue
        # Bin centers sit at (b + 0.5) * resolution; the bias makes a hit
        # exactly on a bin boundary peak in the upper bin, matching the
        # floor(range / resolution) convention. It must exceed float32
        # resolution of the bump values to survive the power dtype.
        center = ranges[i] / config.range_resolution - 0.5 + 1e-5
        lo = max(0, int(math.floor(center)) - half)
        hi = min(n, int(math.ceil(center)) + half + 1)
        bins = np.arange(lo, hi)
        bump = config.peak_power * world.reflectivity[seg[i]] * np.exp(
            -0.5 * ((bins - center) / sigma) ** 2
        )
        power[i, lo:hi] += bump

    return PolarScan(
        timestamp=start_time + config.sweep_period,
        sweep_period=config.sweep_period,
        range_resolution=config.range_resolution,
        power=power,
        azimuths=azimuths,
    )


def render_sequence(
    world: World2D,
    pose_at: Trajectory,
    num_scans: int,
    config: SimConfig,
    start_time: float = 0.0,
):
    """Consecutive sweeps plus ground truth sampled at each sweep end.

    Each scan derives its own random stream from config.rng_seed, so the
    sequence is reproducible while scans stay independent.
    """
    seeds = np.random.SeedSequence(config.rng_seed).spawn(num_scans)
    scans = []
    stamps = []
    poses = []
    for i in range(num_scans):
        t0 = start_time + i * config.sweep_period
        scans.append(render_scan(world, pose_at, t0, config, seed=seeds[i]))
        t_end = t0 + config.sweep_period
        stamps.append(t_end)
        poses.append(pose_at(t_end))
    return scans, TrajectoryEstimate.from_poses(stamps, poses)


def constant_twist_trajectory(start: Pose2, vx: float, vy: float, omega: float) -> Trajectory:
    """Exact unicycle-style motion at a constant body-frame twist.

    (vx, vy) is the body-frame velocity, omega the yaw rate. Straight lines
    (omega = 0) and circular arcs come out exact, not integrated numerically.
    """

    def pose(t: float) -> Pose2:
        phi = omega * t
        if abs(omega) < 1e-12:
            dx, dy = vx * t, vy * t
        else:
            sin_p, cos_p = math.sin(phi), math.cos(phi)
            dx = (sin_p * vx - (1.0 - cos_p) * vy) / omega
            dy = ((1.0 - cos_p) * vx + sin_p * vy) / omega
        c, s = math.cos(start.theta), math.sin(start.theta)
        return Pose2(
            start.x + c * dx - s * dy,
            start.y + s * dx + c * dy,
            normalize_angle(start.theta + phi),
        )

    return pose


def integrated_twist_trajectory(
    start: Pose2, twist_at, duration: float, step: float = 1e-3
) -> Trajectory:
    """Trajectory from a time-varying body twist, finely pre-integrated.

    ``twist_at(t)`` returns (vx, vy, omega) in the body frame. The twist is
    held constant over each integration step and composed exactly, then
    queried poses interpolate the remainder of their step the same way.
    """
    steps = max(1, int(math.ceil(duration / step)))
    poses = [start]
    twists = []
    for i in range(steps):
        t = i * step
        vx, vy, omega = twist_at(t)
        twists.append((vx, vy, omega))
        seg = constant_twist_trajectory(poses[-1], vx, vy, omega)
        poses.append(seg(step))

    def pose(t: float) -> Pose2:
        if t <= 0.0:
            return start
        i = min(int(t / step), steps - 1)
        rem = t - i * step
        vx, vy, omega = twists[i]
        return constant_twist_trajectory(poses[i], vx, vy, omega)(rem)

    return pose


def corridor_world(
    length: float = 300.0,
    half_width: float = 6.0,
    stub_spacing: float = 15.0,
    stub_length: float = 2.0,
    reflectivity: float = 1.0,
    lead_in: float = 20.0,
) -> World2D:
    """Straight corridor with short perpendicular stubs (corner features).

    The side walls constrain the lateral direction; the stubs, alternating
    between walls, constrain travel along the corridor.
    """
    segs = [
        (-lead_in, half_width, length + lead_in, half_width),
        (-lead_in, -half_width, length + lead_in, -half_width),
        (-lead_in, -half_width, -lead_in, half_width),
    ]
    x = 0.0
    side = 1.0
    while x <= length:
        y = side * half_width
        segs.append((x, y, x, y - side * stub_length))
        side = -side
        x += stub_spacing
    segments = np.array(segs)
    return World2D(segments, np.full(len(segments), reflectivity))


def sparse_world(
    length: float = 300.0,
    extent: float = 25.0,
    num_walls: int = 24,
    wall_length: float = 4.0,
    seed: int = 7,
) -> World2D:
    """Scattered short walls at random positions and orientations.

    Sparse structure: few features per sweep, so surface point sets are
    small and coarse grids degrade the geometry quickly.
    """
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-10.0, length + 10.0, num_walls)
    ys = rng.uniform(-extent, extent, num_walls)
    angles = rng.uniform(0.0, math.pi, num_walls)
    dx = 0.5 * wall_length * np.cos(angles)
    dy = 0.5 * wall_length * np.sin(angles)
    segments = np.stack([xs - dx, ys - dy, xs + dx, ys + dy], axis=1)
    return World2D(segments, np.full(num_walls, 1.0))


def parse_world(text: str, source: str = "<string>") -> World2D:
    """World from text: one `x1 y1 x2 y2 reflectivity` line per segment.

    Blank lines and `#` comments are ignored. Raises MalformedFile with the
    offending line number otherwise.
    """
    segs = []
    refl = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            raise MalformedFile(f"{source}:{lineno}: expected 5 fields, got {len(fields)}")
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise MalformedFile(f"{source}:{lineno}: non-numeric field") from None
        segs.append(values[:4])
        refl.append(values[4])
    if not segs:
        return World2D(np.empty((0, 4)), np.empty(0))
    try:
        return World2D(np.array(segs), np.array(refl))
    except ValueError as exc:
        raise MalformedFile(f"{source}: {exc}") from None


def load_world(path) -> World2D:
    try:
        with open(path, "r", encoding="ascii") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise MalformedFile(f"{path}: {exc}") from None
    return parse_world(text, source=str(path))


def world_to_text(world: World2D) -> str:
    lines = []
    for seg, r in zip(world.segments, world.reflectivity):
        lines.append(" ".join(repr(float(v)) for v in (*seg, r)))
    return "\n".join(lines) + "\n"
