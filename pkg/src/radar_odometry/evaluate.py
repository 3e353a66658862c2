"""Odometry error metrics and the resolution sweep experiment.

The benchmark metric averages relative-pose discrepancies between estimate
and ground truth over all subsegments of fixed path lengths (100..800 m
measured along the ground-truth path), reporting translation error as a
percentage and rotation error in degrees per 100 m. The per-frame relative
pose error (RPE) is the mean translational discrepancy of consecutive-frame
relative poses. Both are invariant to a global rigid transform of either
trajectory.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import PathTooShort
from .geometry import Pose2, compose, inverse
from .io import ScanArchive, TrajectoryEstimate
from .pipeline import OdometryParams, run_odometry
from .registration import Metric

SEGMENT_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)

# Slack when matching a subsegment's end to a cumulative path distance, so a
# path sampled exactly at the target length is not skipped past.
_LENGTH_EPS = 1e-9


@dataclass(frozen=True)
class LengthErrors:
    length: float
    translation_percent: float
    rotation_deg_per_100m: float
    num_segments: int


@dataclass(frozen=True)
class OdomErrorReport:
    translation_error_percent: float
    rotation_error_deg_per_100m: float
    per_length: tuple[LengthErrors, ...]
    rpe_mean: float


def _align(estimate: TrajectoryEstimate, truth: TrajectoryEstimate) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs matching estimate to truth by nearest timestamp.

    Matches farther apart than half the truth frame period are dropped, as
    are duplicate matches to the same truth pose (closest wins).
    """
    te = estimate.timestamps
    tt = truth.timestamps
    if len(te) == 0 or len(tt) == 0:
        return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp)
    tol = 0.5 * float(np.median(np.diff(tt))) if len(tt) > 1 else math.inf
    pos = np.searchsorted(tt, te)
    pos = np.clip(pos, 1, len(tt) - 1) if len(tt) > 1 else np.zeros(len(te), dtype=np.intp)
    left = np.abs(te - tt[pos - 1]) if len(tt) > 1 else np.full(len(te), np.inf)
    right = np.abs(te - tt[pos])
    nearest = np.where(left <= right, pos - 1, pos) if len(tt) > 1 else pos
    dist = np.abs(te - tt[nearest])
    ok = dist <= tol
    est_idx = np.flatnonzero(ok)
    tru_idx = nearest[ok]
    # One estimate per truth pose: keep the closest.
    if len(tru_idx):
        order = np.lexsort((dist[ok], tru_idx))
        tru_sorted = tru_idx[order]
        first = np.append(True, np.diff(tru_sorted) != 0)
        sel = np.sort(order[first])
        est_idx = est_idx[sel]
        tru_idx = tru_idx[sel]
    return est_idx, tru_idx


def _relative(xytheta: np.ndarray, i: int, j: int) -> Pose2:
    a = Pose2(*xytheta[i])
    b = Pose2(*xytheta[j])
    return compose(inverse(a), b)


def kitti_odometry_error(estimate: TrajectoryEstimate, truth: TrajectoryEstimate) -> OdomErrorReport:
    """Averaged relative errors over fixed ground-truth path lengths.

    Subsegments start at every aligned frame. Raises PathTooShort when the
    ground-truth path cannot fit even the shortest length; otherwise the
    report covers whichever lengths fit.
    """
    est_idx, tru_idx = _align(estimate, truth)
    if len(est_idx) < 2:
        raise PathTooShort("need at least two aligned poses")
    est = estimate.xytheta[est_idx]
    tru = truth.xytheta[tru_idx]
    steps = np.hypot(np.diff(tru[:, 0]), np.diff(tru[:, 1]))
    dist = np.append(0.0, np.cumsum(steps))

    t_ratios: list[float] = []
    r_ratios: list[float] = []
    per_length: list[LengthErrors] = []
    for length in SEGMENT_LENGTHS:
        ends = np.searchsorted(dist, dist + length - _LENGTH_EPS)
        lt: list[float] = []
        lr: list[float] = []
        for start in range(len(dist)):
            end = ends[start]
            if end >= len(dist):
                break
            rel_tru = _relative(tru, start, end)
            rel_est = _relative(est, start, end)
            err = compose(inverse(rel_est), rel_tru)
            lt.append(math.hypot(err.x, err.y) / length)
            lr.append(abs(err.theta) / length)
        if lt:
            per_length.append(
                LengthErrors(
                    length,
                    100.0 * float(np.mean(lt)),
                    math.degrees(float(np.mean(lr))) * 100.0,
                    len(lt),
                )
            )
            t_ratios.extend(lt)
            r_ratios.extend(lr)
    if not t_ratios:
        raise PathTooShort(
            f"ground-truth path of {dist[-1]:.1f} m is shorter than {SEGMENT_LENGTHS[0]:.0f} m"
        )
    rpe = relative_pose_error(estimate, truth)
    return OdomErrorReport(
        translation_error_percent=100.0 * float(np.mean(t_ratios)),
        rotation_error_deg_per_100m=math.degrees(float(np.mean(r_ratios))) * 100.0,
        per_length=tuple(per_length),
        rpe_mean=rpe,
    )


def relative_pose_error(estimate: TrajectoryEstimate, truth: TrajectoryEstimate) -> float:
    """Mean translational discrepancy of consecutive-frame relative poses."""
    est_idx, tru_idx = _align(estimate, truth)
    if len(est_idx) < 2:
        raise PathTooShort("need at least two aligned poses")
    est = estimate.xytheta[est_idx]
    tru = truth.xytheta[tru_idx]

    def rel_translations(xytheta: np.ndarray) -> np.ndarray:
        dx = np.diff(xytheta[:, 0])
        dy = np.diff(xytheta[:, 1])
        c = np.cos(xytheta[:-1, 2])
        s = np.sin(xytheta[:-1, 2])
        return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=1)

    t_est = rel_translations(est)
    t_tru = rel_translations(tru)
    # Translation of the discrepancy inverse(rel_est) o rel_tru is
    # R(-theta_est) (t_tru - t_est); the rotation does not change the norm.
    diff = t_tru - t_est
    return float(np.mean(np.hypot(diff[:, 0], diff[:, 1])))


@dataclass(frozen=True)
class SweepRow:
    resolution: float
    metric: Metric
    trans_err_pct: float
    rot_err_deg_per_100m: float
    rpe_m: float
    error: str | None = None


SWEEP_CSV_HEADER = "resolution,metric,trans_err_pct,rot_err_deg_per_100m,rpe_m"


def sweep_csv(rows: list[SweepRow]) -> str:
    """CSV of the successful sweep cells."""
    lines = [SWEEP_CSV_HEADER]
    for row in rows:
        if row.error is not None:
            continue
        lines.append(
            f"{row.resolution:.12g},{row.metric.value},{row.trans_err_pct:.12g},"
            f"{row.rot_err_deg_per_100m:.12g},{row.rpe_m:.12g}"
        )
    return "\n".join(lines) + "\n"


def resolution_sweep(
    archive: ScanArchive,
    truth: TrajectoryEstimate,
    resolutions: list[float],
    metrics: list[Metric],
    base_params: OdometryParams | None = None,
    threads: int = 1,
) -> list[SweepRow]:
    """Run the full pipeline per (resolution, metric) and tabulate the errors.

    Failed cells are recorded with their error message instead of aborting
    the sweep. Rows come back in (resolution, metric) input order regardless
    of execution order.
    """
    base = base_params or OdometryParams()
    cells = [(r, metric) for r in resolutions for metric in metrics]

    def run_cell(cell: tuple[float, Metric]) -> SweepRow:
        r, metric = cell
        params = replace(
            base,
            surface=replace(base.surface, resolution=r),
            registration=replace(base.registration, metric=metric),
        )
        try:
            estimate, _ = run_odometry(archive, params)
            report = kitti_odometry_error(estimate, truth)
        except Exception as exc:  # recorded per cell, sweep continues
            return SweepRow(r, metric, math.nan, math.nan, math.nan, error=str(exc))
        return SweepRow(
            r,
            metric,
            report.translation_error_percent,
            report.rotation_error_deg_per_100m,
            report.rpe_mean,
        )

    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run_cell, cells))
    return [run_cell(cell) for cell in cells]
