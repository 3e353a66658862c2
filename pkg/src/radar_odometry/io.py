"""Persistence: scan archives, trajectory files, Oxford-style recordings.

The canonical scan archive is a little-endian binary with a self-describing
fixed header (magic, version, grid shape, range resolution, sweep period,
scan count) followed by per-scan records: timestamp, per-azimuth beam
angles, then the power grid. Trajectories are ASCII text, either the native
`timestamp x y theta` lines or KITTI-style 3x4 pose rows. Readers never
crash on garbage; they raise MalformedFile with a byte offset or line
number.
"""

from __future__ import annotations

import io as _stdio
import math
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import MalformedFile, MissingMetadata
from .geometry import Pose2
from .polar_filter import PolarScan

ARCHIVE_MAGIC = b"RADARCHV"
ARCHIVE_VERSION = 1
_DTYPE_CODES = {0: np.dtype("u1"), 1: np.dtype("<f4"), 2: np.dtype("<f8")}
_DTYPE_FOR = {np.dtype("uint8"): 0, np.dtype("float32"): 1, np.dtype("float64"): 2}

# Oxford Radar RobotCar polar recordings: per-row metadata words ahead of the
# range-bin powers, published grid geometry and sweep timing.
OXFORD_METADATA_BYTES = 11  # int64 timestamp + uint16 encoder + uint8 validity
OXFORD_ENCODER_SIZE = 5600  # azimuth encoder counts per revolution
OXFORD_RANGE_RESOLUTION = 0.0432  # meters per range bin
OXFORD_SWEEP_PERIOD = 0.25  # seconds per revolution


@dataclass(frozen=True)
class TrajectoryEstimate:
    """Timestamped global poses, timestamps strictly increasing."""

    timestamps: np.ndarray  # (N,)
    xytheta: np.ndarray  # (N, 3)

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float).reshape(-1)
        p = np.asarray(self.xytheta, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "xytheta", p)
        if len(t) != len(p):
            raise ValueError("timestamps and poses must have equal length")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    @classmethod
    def from_poses(cls, timestamps: Sequence[float], poses: Sequence[Pose2]) -> "TrajectoryEstimate":
        arr = np.array([[p.x, p.y, p.theta] for p in poses]).reshape(-1, 3)
        return cls(np.asarray(timestamps, dtype=float), arr)

    def __len__(self) -> int:
        return len(self.timestamps)

    def pose(self, i: int) -> Pose2:
        x, y, theta = self.xytheta[i]
        return Pose2(float(x), float(y), float(theta))

    @property
    def positions(self) -> np.ndarray:
        return self.xytheta[:, :2]


@dataclass(frozen=True)
class ScanArchive:
    """Ordered polar sweeps with strictly increasing timestamps."""

    scans: tuple[PolarScan, ...]

    def __post_init__(self):
        scans = tuple(self.scans)
        object.__setattr__(self, "scans", scans)
        stamps = [s.timestamp for s in scans]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ValueError("scan timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.scans)

    def __iter__(self) -> Iterator[PolarScan]:
        return iter(self.scans)

    def __getitem__(self, i: int) -> PolarScan:
        return self.scans[i]


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("ascii"))


# ---------------------------------------------------------------------------
# Binary scan archive


def write_scan_archive(scans: Iterable[PolarScan], path) -> None:
    """Serialize scans losslessly; power values round-trip bit-exact.

    All scans must share grid shape, range resolution, sweep period and
    power dtype (uint8, float32 or float64).
    """
    scans = list(scans)
    buf = _stdio.BytesIO()
    if scans:
        first = scans[0]
        m, n = first.power.shape
        dtype = np.dtype(first.power.dtype)
        if dtype not in _DTYPE_FOR:
            raise ValueError(f"unsupported power dtype {dtype}")
        res, period = first.range_resolution, first.sweep_period
    else:
        m = n = 0
        dtype = np.dtype("float64")
        res = period = 1.0
    buf.write(ARCHIVE_MAGIC)
    buf.write(struct.pack("<IIIB3x", ARCHIVE_VERSION, m, n, _DTYPE_FOR[dtype]))
    buf.write(struct.pack("<ddQ", res, period, len(scans)))
    last_ts = -math.inf
    for scan in scans:
        if scan.power.shape != (m, n) or np.dtype(scan.power.dtype) != dtype:
            raise ValueError("all scans in an archive must share shape and dtype")
        if scan.range_resolution != res or scan.sweep_period != period:
            raise ValueError("all scans in an archive must share geometry and timing")
        if scan.timestamp <= last_ts:
            raise ValueError("scan timestamps must be strictly increasing")
        last_ts = scan.timestamp
        buf.write(struct.pack("<d", scan.timestamp))
        buf.write(np.ascontiguousarray(scan.azimuths, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(scan.power, dtype=dtype.newbyteorder("<")).tobytes())
    atomic_write_bytes(path, buf.getvalue())


def _read_exact(fh, count: int, what: str) -> bytes:
    offset = fh.tell()
    data = fh.read(count)
    if len(data) != count:
        raise MalformedFile(
            f"truncated archive: expected {count} bytes for {what} at offset {offset}",
            offset=offset,
        )
    return data


def read_scan_archive(source) -> ScanArchive:
    """Parse an archive from a path or a binary file-like object."""
    if hasattr(source, "read"):
        return _parse_archive(source)
    with open(source, "rb") as fh:
        return _parse_archive(fh)


def _parse_archive(fh) -> ScanArchive:
    magic = _read_exact(fh, len(ARCHIVE_MAGIC), "magic")
    if magic != ARCHIVE_MAGIC:
        raise MalformedFile(f"bad magic {magic!r} at offset 0", offset=0)
    version, m, n, dtype_code = struct.unpack("<IIIB3x", _read_exact(fh, 16, "header"))
    if version != ARCHIVE_VERSION:
        raise MalformedFile(f"unsupported archive version {version}", offset=8)
    if dtype_code not in _DTYPE_CODES:
        raise MalformedFile(f"unknown power dtype code {dtype_code}", offset=20)
    res, period, count = struct.unpack("<ddQ", _read_exact(fh, 24, "header"))
    if count and (m < 1 or n < 1):
        raise MalformedFile(f"invalid grid shape {m}x{n}", offset=12)
    if m > 1_000_000 or n > 1_000_000 or m * n > 500_000_000:
        raise MalformedFile(f"implausible grid shape {m}x{n}", offset=12)
    if count and (not math.isfinite(res) or res <= 0 or not math.isfinite(period) or period <= 0):
        raise MalformedFile("invalid range resolution or sweep period", offset=24)
    if count > 100_000_000:
        raise MalformedFile(f"implausible scan count {count}", offset=40)
    dtype = _DTYPE_CODES[dtype_code]
    scans = []
    last_ts = -math.inf
    for _ in range(count):
        offset = fh.tell()
        (ts,) = struct.unpack("<d", _read_exact(fh, 8, "timestamp"))
        if not math.isfinite(ts) or ts <= last_ts:
            raise MalformedFile(f"non-monotone timestamp at offset {offset}", offset=offset)
        last_ts = ts
        az = np.frombuffer(_read_exact(fh, 8 * m, "azimuths"), dtype="<f8").astype(float)
        raw = _read_exact(fh, dtype.itemsize * m * n, "power grid")
        power = np.frombuffer(raw, dtype=dtype).reshape(m, n)
        if dtype.kind == "f":
            power = power.astype(power.dtype.newbyteorder("="))
        try:
            scans.append(
                PolarScan(
                    timestamp=ts,
                    sweep_period=period,
                    range_resolution=res,
                    power=power,
                    azimuths=az,
                )
            )
        except ValueError as exc:
            raise MalformedFile(f"invalid scan at offset {offset}: {exc}", offset=offset) from None
    trailing = fh.read(1)
    if trailing:
        offset = fh.tell() - 1
        raise MalformedFile(f"trailing bytes after last scan at offset {offset}", offset=offset)
    return ScanArchive(tuple(scans))


# ---------------------------------------------------------------------------
# Trajectory files

TRAJECTORY_FORMATS = ("native", "kitti")


def _kitti_row(pose: Pose2) -> str:
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    values = [c, -s, 0.0, pose.x, s, c, 0.0, pose.y, 0.0, 0.0, 1.0, 0.0]
    return " ".join(f"{v + 0.0:.12g}" for v in values)  # +0.0 folds -0 into 0


def write_trajectory(traj: TrajectoryEstimate, path, format: str = "native") -> None:
    """native: `timestamp x y theta` per line, exact-decimal floats.

    kitti: 12 numbers per line, the top 3x4 rows of the SE(3) embedding with
    rotation about the vertical axis and z = 0 (timestamps are not stored).
    """
    if format not in TRAJECTORY_FORMATS:
        raise ValueError(f"unknown trajectory format {format!r}")
    lines = []
    for i in range(len(traj)):
        if format == "native":
            x, y, theta = traj.xytheta[i]
            lines.append(
                f"{repr(float(traj.timestamps[i]))} {repr(float(x))} {repr(float(y))} {repr(float(theta))}"
            )
        else:
            lines.append(_kitti_row(traj.pose(i)))
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_trajectory(source, format: str = "native") -> TrajectoryEstimate:
    """Inverse of write_trajectory.

    KITTI rows carry no time, so timestamps come back as the frame index.
    """
    if format not in TRAJECTORY_FORMATS:
        raise ValueError(f"unknown trajectory format {format!r}")
    if hasattr(source, "read"):
        text = source.read()
        name = "<stream>"
    else:
        name = str(source)
        with open(source, "rb") as fh:
            text = fh.read()
    if isinstance(text, bytes):
        try:
            text = text.decode("ascii")
        except UnicodeDecodeError as exc:
            raise MalformedFile(f"{name}: not ASCII text ({exc})") from None
    stamps: list[float] = []
    rows: list[list[float]] = []
    expected = 4 if format == "native" else 12
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != expected:
            raise MalformedFile(f"{name}:{lineno}: expected {expected} fields, got {len(fields)}")
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise MalformedFile(f"{name}:{lineno}: non-numeric field") from None
        if not all(math.isfinite(v) for v in values):
            raise MalformedFile(f"{name}:{lineno}: non-finite value")
        if format == "native":
            stamps.append(values[0])
            rows.append(values[1:])
        else:
            r00, _, _, tx, r10, _, _, ty = values[:8]
            stamps.append(float(len(stamps)))
            rows.append([tx, ty, math.atan2(r10, r00)])
    try:
        return TrajectoryEstimate(np.array(stamps), np.array(rows).reshape(-1, 3))
    except ValueError as exc:
        raise MalformedFile(f"{name}: {exc}") from None


# ---------------------------------------------------------------------------
# Oxford-style polar recordings


def _decode_oxford_image(data: np.ndarray, name: str) -> PolarScan | None:
    if data.ndim != 2:
        raise MalformedFile(f"{name}: polar image must be 2-D, got shape {data.shape}")
    if data.shape[1] <= OXFORD_METADATA_BYTES:
        raise MissingMetadata(
            f"{name}: rows carry {data.shape[1]} bytes, need more than "
            f"{OXFORD_METADATA_BYTES} metadata bytes"
        )
    raw = np.ascontiguousarray(data, dtype=np.uint8)
    stamps = raw[:, :8].copy().view("<i8").reshape(-1)
    encoder = raw[:, 8:10].copy().view("<u2").reshape(-1)
    valid = raw[:, 10] == 255
    power = raw[:, OXFORD_METADATA_BYTES:]
    if not np.any(valid):
        return None
    stamps = stamps[valid]
    encoder = encoder[valid]
    power = power[valid]
    azimuths = encoder.astype(float) / OXFORD_ENCODER_SIZE * 2.0 * math.pi
    # Keep the longest strictly increasing run; rows breaking encoder
    # monotonicity are treated like invalid rows.
    keep = np.ones(len(azimuths), dtype=bool)
    last = -math.inf
    for i, a in enumerate(azimuths):
        if a <= last:
            keep[i] = False
        else:
            last = a
    if not np.any(keep):
        return None
    try:
        return PolarScan(
            timestamp=float(stamps[keep][-1]) / 1e6,
            sweep_period=OXFORD_SWEEP_PERIOD,
            range_resolution=OXFORD_RANGE_RESOLUTION,
            power=power[keep],
            azimuths=azimuths[keep],
        )
    except ValueError as exc:
        raise MalformedFile(f"{name}: {exc}") from None


def read_oxford_polar(directory) -> ScanArchive:
    """Load a directory of Oxford-layout polar scan PNGs, sorted by name.

    Each image row is one azimuth: 8 bytes little-endian capture timestamp
    (microseconds), 2 bytes azimuth encoder count, 1 validity byte (255 =
    valid), then one power byte per range bin. Invalid rows are dropped;
    scans with no valid rows are skipped.
    """
    from PIL import Image, UnidentifiedImageError

    directory = Path(directory)
    if not directory.is_dir():
        raise MalformedFile(f"{directory}: not a directory")
    scans = []
    for path in sorted(directory.glob("*.png")):
        try:
            with Image.open(path) as img:
                data = np.asarray(img.convert("L"))
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            raise MalformedFile(f"{path}: unreadable image ({exc})") from None
        scan = _decode_oxford_image(data, str(path))
        if scan is not None:
            scans.append(scan)
    try:
        return ScanArchive(tuple(scans))
    except ValueError as exc:
        raise MalformedFile(f"{directory}: {exc}") from None
