"""Figure rendering for report outputs, written next to the CSV files.

Figures are drawn off-screen (no interactive backend) and saved atomically,
so report commands work in headless environments and never leave partial
files behind.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .evaluate import OdomErrorReport, SweepRow
from .io import TrajectoryEstimate
from .registration import Metric

_METRIC_COLORS = {Metric.P2L: "tab:red", Metric.P2P: "tab:blue"}


def _save(fig: Figure, path) -> None:
    path = Path(path)
    FigureCanvasAgg(fig)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=path.suffix)
    os.close(fd)
    try:
        fig.savefig(tmp, format=path.suffix.lstrip(".") or "png", bbox_inches="tight", dpi=120)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_trajectory_figure(
    path, estimate: TrajectoryEstimate, truth: TrajectoryEstimate | None = None
) -> None:
    """Top-down path plot of the estimated (and optional truth) trajectory."""
    fig = Figure(figsize=(6, 6))
    ax = fig.subplots()
    if truth is not None and len(truth):
        ax.plot(truth.positions[:, 0], truth.positions[:, 1], color="0.6", lw=2, label="ground truth")
    if len(estimate):
        ax.plot(estimate.positions[:, 0], estimate.positions[:, 1], color="tab:red", lw=1.2, label="estimate")
        ax.plot(estimate.positions[0, 0], estimate.positions[0, 1], "ko", ms=5, label="start")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("Estimated odometry")
    _save(fig, path)


def save_timing_figure(path, diagnostics) -> None:
    """Per-frame stage timing with the per-stage means in the legend."""
    fig = Figure(figsize=(7, 3.5))
    ax = fig.subplots()
    frames = [d.frame for d in diagnostics]
    for attr, label, color in (
        ("stage_filter_ms", "filter", "tab:blue"),
        ("stage_surface_ms", "surface", "tab:orange"),
        ("stage_register_ms", "register", "tab:green"),
        ("total_ms", "total", "0.3"),
    ):
        values = [getattr(d, attr) for d in diagnostics]
        mean = float(np.mean(values)) if values else 0.0
        ax.plot(frames, values, lw=0.9, color=color, label=f"{label} ({mean:.1f} ms)")
    ax.set_xlabel("frame")
    ax.set_ylabel("time [ms]")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("Per-frame stage timing")
    _save(fig, path)


def save_sweep_figure(path, rows: list[SweepRow]) -> None:
    """Translation error and RPE versus grid resolution, per metric."""
    fig = Figure(figsize=(7, 4))
    ax = fig.subplots()
    ax2 = ax.twinx()
    for metric in (Metric.P2L, Metric.P2P):
        ok = [r for r in rows if r.metric == metric and r.error is None]
        if not ok:
            continue
        ok.sort(key=lambda r: r.resolution)
        res = [r.resolution for r in ok]
        color = _METRIC_COLORS[metric]
        ax.plot(res, [r.trans_err_pct for r in ok], "-o", color=color,
                label=f"{metric.value.upper()} trans. err [%]")
        ax2.plot(res, [r.rpe_m for r in ok], "--x", color=color,
                 label=f"{metric.value.upper()} RPE [m]")
    ax.set_xlabel("resolution r [m]")
    ax.set_ylabel("translation error [%]")
    ax2.set_ylabel("relative pose error [m]")
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="best", fontsize=8)
    ax.set_title("Odometry error vs. resolution")
    _save(fig, path)


def save_error_report_figure(path, report: OdomErrorReport) -> None:
    """Per-length translation and rotation error breakdown."""
    fig = Figure(figsize=(7, 3.5))
    ax = fig.subplots()
    ax2 = ax.twinx()
    lengths = [le.length for le in report.per_length]
    ax.plot(lengths, [le.translation_percent for le in report.per_length], "-o",
            color="tab:red", label="translation [%]")
    ax2.plot(lengths, [le.rotation_deg_per_100m for le in report.per_length], "--x",
             color="tab:blue", label="rotation [deg/100m]")
    ax.set_xlabel("segment length [m]")
    ax.set_ylabel("translation error [%]")
    ax2.set_ylabel("rotation error [deg/100m]")
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="best", fontsize=8)
    ax.set_title(
        f"Mean: {report.translation_error_percent:.2f} % / "
        f"{report.rotation_error_deg_per_100m:.3f} deg/100m / RPE {report.rpe_mean:.3f} m"
    )
    _save(fig, path)
