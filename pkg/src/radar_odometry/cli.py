"""Command-line front end: odometry, simulate, evaluate, sweep.

Shared options can come from flags or a plain-text key=value config file;
flags override the file, the file overrides defaults, and unknown keys are
rejected. Report commands write figures next to their CSV outputs.

Exit codes: 0 success, 1 malformed or missing input, 2 invalid config.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import MalformedFile, PathTooShort
from .evaluate import (
    kitti_odometry_error,
    relative_pose_error,
    resolution_sweep,
    sweep_csv,
)
from .geometry import Pose2
from .io import (
    atomic_write_text,
    read_oxford_polar,
    read_scan_archive,
    read_trajectory,
    write_scan_archive,
    write_trajectory,
)
from .pipeline import OdometryParams, run_odometry
from .polar_filter import FilterParams
from .registration import Metric, RegistrationParams
from .simulate import SimConfig, constant_twist_trajectory, load_world, render_sequence
from .surface import SurfaceParams

THREADS_ENV = "RADAR_ODOM_THREADS"

DIAGNOSTICS_HEADER = (
    "frame,stage_filter_ms,stage_surface_ms,stage_register_ms,total_ms,"
    "iterations,correspondences,keyframe_id"
)


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Shared options; field names double as the config-file keys."""

    k: int = 12
    z_min: float = 0.0
    resolution: float = 3.0
    metric: str = "p2l"
    keyframe_distance: float = 1.5
    max_iterations: int = 50
    seed: int = 0
    format: str = "native"
    output: str = "."

    def odometry_params(self) -> OdometryParams:
        return OdometryParams(
            filter=FilterParams(k=self.k, z_min=self.z_min),
            surface=SurfaceParams(resolution=self.resolution),
            registration=RegistrationParams(
                metric=Metric(self.metric), max_iterations=self.max_iterations
            ),
            keyframe_distance=self.keyframe_distance,
        )


_CONFIG_PARSERS = {
    "k": int,
    "z_min": float,
    "resolution": float,
    "metric": str,
    "keyframe_distance": float,
    "max_iterations": int,
    "seed": int,
    "format": str,
    "output": str,
}


def load_config_file(path) -> dict:
    """Parse key=value lines; `#` comments and blank lines are ignored."""
    try:
        text = Path(path).read_text(encoding="ascii")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config file {path} is not ASCII: {exc}") from None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _CONFIG_PARSERS[key](value)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return values


def merge_config(args: argparse.Namespace) -> RunConfig:
    """Apply precedence flag > config file > default and validate."""
    file_values = load_config_file(args.config) if args.config else {}
    values = {}
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
        elif f.name in file_values:
            values[f.name] = file_values[f.name]
    config = RunConfig(**values)
    if config.metric not in ("p2l", "p2p"):
        raise ConfigError(f"metric must be p2l or p2p, got {config.metric!r}")
    if config.format not in ("native", "kitti"):
        raise ConfigError(f"format must be native or kitti, got {config.format!r}")
    if config.k < 1:
        raise ConfigError("k must be >= 1")
    if config.z_min < 0:
        raise ConfigError("z_min must be >= 0")
    if config.resolution <= 0:
        raise ConfigError("resolution must be positive")
    if config.keyframe_distance <= 0:
        raise ConfigError("keyframe_distance must be positive")
    if config.max_iterations < 1:
        raise ConfigError("max_iterations must be >= 1")
    return config


def thread_cap() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {threads}")
    return threads


def _add_shared_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, help="strongest returns kept per azimuth")
    parser.add_argument("--z-min", dest="z_min", type=float, help="minimum return power")
    parser.add_argument("--resolution", type=float, help="surface grid resolution r [m]")
    parser.add_argument("--metric", choices=["p2l", "p2p"], help="registration metric")
    parser.add_argument(
        "--keyframe-distance", dest="keyframe_distance", type=float,
        help="distance travelled before a new keyframe [m]",
    )
    parser.add_argument(
        "--max-iterations", dest="max_iterations", type=int,
        help="registration iteration budget",
    )
    parser.add_argument("--seed", type=int, help="random seed for simulation")
    parser.add_argument("--config", help="key=value config file (flags override it)")
    parser.add_argument("--output", help="output directory (default: current)")
    parser.add_argument("--format", choices=["native", "kitti"], help="trajectory file format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radar-odom",
        description="Radar odometry pipeline: run, simulate, evaluate, sweep.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("odometry", help="run odometry on a scan archive")
    p.add_argument("archive", help="scan archive file, or directory of polar scan images")
    _add_shared_flags(p)

    p = sub.add_parser("simulate", help="render a synthetic scan archive + ground truth")
    p.add_argument("world", help="world file: `x1 y1 x2 y2 reflectivity` per line")
    p.add_argument("--num-scans", type=int, default=100)
    p.add_argument("--speed", type=float, default=5.0, help="forward speed [m/s]")
    p.add_argument("--turn-rate", type=float, default=0.0, help="yaw rate [rad/s]")
    p.add_argument("--start", default="0,0,0", help="start pose x,y,theta")
    p.add_argument("--azimuths", type=int, default=200)
    p.add_argument("--bins", type=int, default=400)
    p.add_argument("--range-resolution", type=float, default=0.25)
    p.add_argument("--sweep-period", type=float, default=0.25)
    p.add_argument("--noise-floor", type=float, default=0.0, help="noise floor mean power")
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--peak-power", type=float, default=100.0)
    p.add_argument("--peak-width", type=float, default=2.0, help="range smear sigma [bins]")
    p.add_argument("--dropout", type=float, default=0.0, help="per-azimuth speckle dropout probability")
    _add_shared_flags(p)

    p = sub.add_parser("evaluate", help="score an estimated trajectory against ground truth")
    p.add_argument("estimate", help="estimated trajectory file")
    p.add_argument("truth", help="ground-truth trajectory file")
    p.add_argument("--estimate-format", choices=["native", "kitti"], default="native")
    p.add_argument("--truth-format", choices=["native", "kitti"], default="native")
    _add_shared_flags(p)

    p = sub.add_parser("sweep", help="error vs. resolution for P2L/P2P")
    p.add_argument("archive", help="scan archive file, or directory of polar scan images")
    p.add_argument("truth", help="ground-truth trajectory file")
    p.add_argument("--resolutions", default="2,3,4", help="comma-separated resolutions [m]")
    p.add_argument("--metrics", default="p2l,p2p", help="comma-separated metrics")
    _add_shared_flags(p)

    return parser


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_scans(path):
    """Archive file, or a directory of Oxford-layout polar scan images."""
    if Path(path).is_dir():
        return read_oxford_polar(path)
    return read_scan_archive(path)


def _diagnostics_csv(diagnostics) -> str:
    lines = [DIAGNOSTICS_HEADER]
    for d in diagnostics:
        lines.append(
            f"{d.frame},{d.stage_filter_ms:.3f},{d.stage_surface_ms:.3f},"
            f"{d.stage_register_ms:.3f},{d.total_ms:.3f},{d.iterations},"
            f"{d.correspondences},{d.keyframe_id}"
        )
    return "\n".join(lines) + "\n"


def cmd_odometry(args: argparse.Namespace) -> int:
    config = merge_config(args)
    thread_cap()  # validated even though odometry itself is single-threaded
    archive = _load_scans(args.archive)
    trajectory, diagnostics = run_odometry(archive, config.odometry_params())
    out = _out_dir(config)
    traj_name = "trajectory.txt" if config.format == "native" else "trajectory_kitti.txt"
    write_trajectory(trajectory, out / traj_name, format=config.format)
    atomic_write_text(out / "diagnostics.csv", _diagnostics_csv(diagnostics))

    from .plots import save_timing_figure, save_trajectory_figure

    save_trajectory_figure(out / "trajectory.png", trajectory)
    save_timing_figure(out / "timing.png", diagnostics)

    filter_ms = [d.stage_filter_ms for d in diagnostics]
    match_ms = [d.stage_surface_ms + d.stage_register_ms for d in diagnostics]
    total_ms = [d.total_ms for d in diagnostics]
    print(f"frames processed: {len(diagnostics)}")
    print(f"keyframes created: {sum(1 for d in diagnostics if d.keyframe_created)}")
    if diagnostics:
        print(
            "per-frame time: "
            f"{_mean(total_ms):.1f}+-{_sd(total_ms):.1f} ms total, "
            f"{_mean(filter_ms):.1f}+-{_sd(filter_ms):.1f} ms filtering, "
            f"{_mean(match_ms):.1f}+-{_sd(match_ms):.1f} ms surface+match"
        )
    print(f"wrote {out / traj_name}, {out / 'diagnostics.csv'}, "
          f"{out / 'trajectory.png'}, {out / 'timing.png'}")
    return 0


def _mean(values) -> float:
    return sum(values) / len(values) if values else 0.0


def _sd(values) -> float:
    if len(values) < 2:
        return 0.0
    mu = _mean(values)
    return math.sqrt(sum((v - mu) ** 2 for v in values) / (len(values) - 1))


def _parse_start(raw: str) -> Pose2:
    parts = raw.split(",")
    if len(parts) != 3:
        raise ConfigError(f"--start expects x,y,theta, got {raw!r}")
    try:
        x, y, theta = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"--start expects numbers, got {raw!r}") from None
    return Pose2(x, y, theta)


def cmd_simulate(args: argparse.Namespace) -> int:
    config = merge_config(args)
    if args.num_scans < 1:
        raise ConfigError("--num-scans must be >= 1")
    sim = SimConfig(
        num_azimuths=args.azimuths,
        num_bins=args.bins,
        range_resolution=args.range_resolution,
        sweep_period=args.sweep_period,
        noise_floor_mean=args.noise_floor,
        noise_floor_sd=args.noise_sd,
        peak_power=args.peak_power,
        peak_width=args.peak_width,
        rng_seed=config.seed,
        speckle_dropout_prob=args.dropout,
    )
    world = load_world(args.world)
    trajectory = constant_twist_trajectory(_parse_start(args.start), args.speed, 0.0, args.turn_rate)
    scans, truth = render_sequence(world, trajectory, args.num_scans, sim)
    out = _out_dir(config)
    write_scan_archive(scans, out / "scans.rad")
    write_trajectory(truth, out / "ground_truth.txt", format="native")
    print(f"wrote {out / 'scans.rad'} ({len(scans)} scans), {out / 'ground_truth.txt'}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = merge_config(args)
    estimate = read_trajectory(args.estimate, format=args.estimate_format)
    truth = read_trajectory(args.truth, format=args.truth_format)
    out = _out_dir(config)

    report = None
    rpe = None
    notes = []
    try:
        report = kitti_odometry_error(estimate, truth)
        rpe = report.rpe_mean
    except PathTooShort as exc:
        notes.append(f"path too short for the benchmark metric: {exc}")
        try:
            rpe = relative_pose_error(estimate, truth)
        except PathTooShort as exc2:
            notes.append(f"relative pose error unavailable: {exc2}")

    lines = ["length_m,trans_err_pct,rot_err_deg_per_100m,segments"]
    if report is not None:
        print(f"translation error: {report.translation_error_percent:.4f} %")
        print(f"rotation error:    {report.rotation_error_deg_per_100m:.4f} deg/100m")
        for le in report.per_length:
            lines.append(
                f"{le.length:.12g},{le.translation_percent:.12g},"
                f"{le.rotation_deg_per_100m:.12g},{le.num_segments}"
            )
    if rpe is not None:
        print(f"relative pose error: {rpe:.6f} m")
        lines.append(f"rpe,{rpe:.12g},,")
    for note in notes:
        print(note, file=sys.stderr)
    atomic_write_text(out / "evaluation.csv", "\n".join(lines) + "\n")
    written = [str(out / "evaluation.csv")]

    from .plots import save_error_report_figure, save_trajectory_figure

    save_trajectory_figure(out / "trajectories.png", estimate, truth)
    written.append(str(out / "trajectories.png"))
    if report is not None:
        save_error_report_figure(out / "evaluation.png", report)
        written.append(str(out / "evaluation.png"))
    print("wrote " + ", ".join(written))
    return 0


def _parse_sweep_lists(args: argparse.Namespace) -> tuple[list[float], list[Metric]]:
    try:
        resolutions = [float(v) for v in args.resolutions.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad --resolutions value {args.resolutions!r}") from None
    metrics = []
    for raw in args.metrics.split(","):
        raw = raw.strip()
        if not raw:
            continue
        try:
            metrics.append(Metric(raw))
        except ValueError:
            raise ConfigError(f"bad --metrics value {raw!r}") from None
    return resolutions, metrics


def cmd_sweep(args: argparse.Namespace) -> int:
    config = merge_config(args)
    threads = thread_cap()
    resolutions, metrics = _parse_sweep_lists(args)
    archive = _load_scans(args.archive)
    truth = read_trajectory(args.truth, format="native")
    rows = resolution_sweep(
        archive, truth, resolutions, metrics,
        base_params=config.odometry_params(), threads=threads,
    )
    ok = [r for r in rows if r.error is None]
    for row in rows:
        if row.error is None:
            print(
                f"r={row.resolution:g} {row.metric.value}: "
                f"{row.trans_err_pct:.4f} % | {row.rot_err_deg_per_100m:.4f} deg/100m "
                f"| RPE {row.rpe_m:.4f} m"
            )
        else:
            print(f"r={row.resolution:g} {row.metric.value}: FAILED ({row.error})", file=sys.stderr)
    if not ok:
        print("error: every sweep cell failed", file=sys.stderr)
        return 1
    out = _out_dir(config)
    atomic_write_text(out / "sweep.csv", sweep_csv(rows))

    from .plots import save_sweep_figure

    save_sweep_figure(out / "sweep.png", rows)
    print(f"wrote {out / 'sweep.csv'}, {out / 'sweep.png'}")
    return 0


_COMMANDS = {
    "odometry": cmd_odometry,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (MalformedFile, FileNotFoundError, IsADirectoryError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
