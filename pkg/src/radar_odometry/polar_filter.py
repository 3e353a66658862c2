"""Per-azimuth strongest-return filtering of polar radar sweeps.

A raw sweep is an (m, n) power grid: m azimuths, n range bins. Filtering
keeps, per azimuth, at most k returns that exceed a noise level, then maps
the survivors into Cartesian sensor-frame coordinates with per-point timing
for downstream motion compensation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PolarScan:
    """One full sweep of a rotating radar.

    ``timestamp`` marks the end of the sweep; azimuth i was sampled at
    ``timestamp - sweep_period + sweep_period * i / m``. ``power`` is (m, n)
    and non-negative; ``azimuths`` are sensor-frame beam angles in radians,
    strictly increasing, spanning at most one revolution.
    """

    timestamp: float
    sweep_period: float
    range_resolution: float
    power: np.ndarray
    azimuths: np.ndarray

    def __post_init__(self):
        power = np.asarray(self.power)
        azimuths = np.asarray(self.azimuths, dtype=float)
        object.__setattr__(self, "power", power)
        object.__setattr__(self, "azimuths", azimuths)
        if self.sweep_period <= 0:
            raise ValueError("sweep_period must be positive")
        if self.range_resolution <= 0:
            raise ValueError("range_resolution must be positive")
        if power.ndim != 2 or power.shape[0] < 1 or power.shape[1] < 1:
            raise ValueError("power must be a non-empty (m, n) grid")
        if not np.issubdtype(power.dtype, np.integer):
            if not np.all(np.isfinite(power)):
                raise ValueError("power values must be finite")
        if np.any(power < 0):
            raise ValueError("power values must be non-negative")
        if azimuths.shape != (power.shape[0],):
            raise ValueError("azimuths must have one entry per power row")
        if not np.all(np.isfinite(azimuths)):
            raise ValueError("azimuths must be finite")
        if azimuths.size > 1 and np.any(np.diff(azimuths) <= 0):
            raise ValueError("azimuths must be strictly increasing")
        if azimuths.size > 1 and azimuths[-1] - azimuths[0] > 2.0 * math.pi + 1e-9:
            raise ValueError("azimuths span more than one revolution")

    @property
    def num_azimuths(self) -> int:
        return self.power.shape[0]

    @property
    def num_bins(self) -> int:
        return self.power.shape[1]

    def azimuth_angle(self, i: int) -> float:
        return float(self.azimuths[i])


def uniform_azimuths(m: int) -> np.ndarray:
    """Evenly spaced beam angles 2*pi*i/m for i in [0, m)."""
    return 2.0 * math.pi * np.arange(m) / m


@dataclass(frozen=True)
class FilterParams:
    k: int = 12
    z_min: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.z_min < 0:
            raise ValueError("z_min must be >= 0")


@dataclass(frozen=True)
class Detections:
    """Filter output, still polar-indexed (no Cartesian positions yet)."""

    azimuth_index: np.ndarray
    bin_index: np.ndarray
    power: np.ndarray

    def __len__(self) -> int:
        return self.azimuth_index.shape[0]


@dataclass(frozen=True)
class RadarPointCloud:
    """Cartesian sensor-frame returns with per-point sweep timing."""

    xy: np.ndarray
    power: np.ndarray
    azimuth_index: np.ndarray
    bin_index: np.ndarray
    relative_time: np.ndarray

    def __len__(self) -> int:
        return self.xy.shape[0]


_EMPTY = np.empty(0)
_EMPTY_I = np.empty(0, dtype=np.intp)


def empty_point_cloud() -> RadarPointCloud:
    return RadarPointCloud(np.empty((0, 2)), _EMPTY, _EMPTY_I, _EMPTY_I, _EMPTY)


def k_strongest(
    scan: PolarScan, params: FilterParams, noise_profile: np.ndarray | None = None
) -> Detections:
    """Keep per azimuth the k strongest returns above the noise level.

    A return survives only if its power strictly exceeds the threshold
    (z_min, or per-bin max(z_min, noise_profile[bin]) when a profile is
    given). Among equal powers competing for the last slots, smaller range
    bins win, which makes the output deterministic. Output is ordered by
    ascending azimuth, then ascending bin.

    Selection is a bounded partition per row, not a full sort: n may be in
    the thousands and this is the dominant cost of the filtering stage.
    """
    if noise_profile is not None:
        n = scan.power.shape[1]
        noise_profile = np.asarray(noise_profile, dtype=float)
        if noise_profile.shape != (n,):
            raise ValueError("noise_profile must have one entry per range bin")
        return _k_strongest_masked(scan, params.k, np.maximum(params.z_min, noise_profile))
    return _k_strongest_scalar(scan, params.k, params.z_min)


def _out_of(power: np.ndarray, az: np.ndarray, bins: np.ndarray) -> Detections:
    order = np.lexsort((bins, az))
    az = az[order]
    bins = bins[order]
    return Detections(az, bins, power[az, bins].astype(np.float64))


def _k_strongest_scalar(scan: PolarScan, k: int, z_min: float) -> Detections:
    """Fast path for a scalar threshold.

    The k strongest of a raw row, filtered to > z_min afterwards, equal the
    k strongest of the thresholded row: any value above the threshold but
    outside the raw top-k is outranked by k values that are all above the
    threshold too. Tie-breaking only needs per-row repair where several
    equal powers compete for the last slots.
    """
    power = scan.power
    if not np.issubdtype(power.dtype, np.floating):
        power = power.astype(np.float32)
    m, n = power.shape
    if k >= n:
        az, bins = np.nonzero(power > z_min)
        return _out_of(power, az, bins)

    cand_idx = np.argpartition(power, n - k, axis=1)[:, n - k :]
    cand_val = np.take_along_axis(power, cand_idx, axis=1)
    boundary = cand_val.min(axis=1)  # k-th largest value per row

    valid = cand_val > z_min
    tie_rows = boundary > z_min
    if np.any(tie_rows):
        strict_count = (power > boundary[:, None]).sum(axis=1)
        eq_count = (power == boundary[:, None]).sum(axis=1)
        need = k - strict_count
        for row in np.flatnonzero(tie_rows & (eq_count > need)):
            # More equal-to-boundary values than slots: keep smaller bins.
            r = power[row]
            b = boundary[row]
            keep_bins = np.concatenate(
                [np.flatnonzero(r > b), np.flatnonzero(r == b)[: need[row]]]
            )
            cand_idx[row] = keep_bins  # exactly k entries by construction
            valid[row] = True

    rows = np.broadcast_to(np.arange(m)[:, None], (m, k))
    return _out_of(power, rows[valid], cand_idx[valid])


def _k_strongest_masked(scan: PolarScan, k: int, threshold: np.ndarray) -> Detections:
    """General path for per-bin thresholds: mask, then bounded partition."""
    power = scan.power.astype(np.float64, copy=False)
    m, n = power.shape
    masked = np.where(power > threshold, power, -np.inf)
    if k >= n:
        keep = masked > -np.inf
    else:
        boundary = np.partition(masked, n - k, axis=1)[:, n - k]
        strictly = masked > boundary[:, None]
        tied = (masked == boundary[:, None]) & np.isfinite(boundary)[:, None]
        need = k - strictly.sum(axis=1)
        keep = strictly | (tied & (np.cumsum(tied, axis=1) <= need[:, None]))
    az, bins = np.nonzero(keep)
    return Detections(az, bins, power[az, bins].astype(np.float64))


def polar_to_cartesian(detections: Detections, scan: PolarScan) -> RadarPointCloud:
    """Map polar-indexed detections into the Cartesian sensor frame.

    Ranges are taken at bin centers, (bin + 0.5) * range_resolution.
    Per-point time within the sweep assumes uniform rotation:
    sweep_period * azimuth_index / m.
    """
    az = detections.azimuth_index
    ranges = (detections.bin_index + 0.5) * scan.range_resolution
    phi = scan.azimuths[az]
    xy = np.stack([ranges * np.cos(phi), ranges * np.sin(phi)], axis=1)
    relative_time = scan.sweep_period * az / scan.num_azimuths
    return RadarPointCloud(xy, detections.power.copy(), az, detections.bin_index, relative_time)


def filter_scan(
    scan: PolarScan, params: FilterParams, noise_profile: np.ndarray | None = None
) -> RadarPointCloud:
    """k_strongest followed by polar_to_cartesian."""
    return polar_to_cartesian(k_strongest(scan, params, noise_profile), scan)
