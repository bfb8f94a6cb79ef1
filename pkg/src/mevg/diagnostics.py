"""Run diagnostics: per-step guidance metrics, delimited export, and figures.

The recorder is handed through the generation entry points; inversion and
sampling call `record` once per step with their pre-update loss.  Figures are
built on explicit Figure objects, so no interactive backend is touched.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

METRIC_COLUMNS = ("clip", "phase", "step_index", "t", "metric", "value")


class RunRecorder:
    """Collects one row per guidance step; `clip` is set by the driver."""

    def __init__(self):
        self.clip = 0
        self.rows: list[dict] = []

    def record(self, phase: str, step_index: int, t: int, **metrics: float) -> None:
        for name, value in metrics.items():
            self.rows.append(
                {
                    "clip": self.clip,
                    "phase": phase,
                    "step_index": int(step_index),
                    "t": int(t),
                    "metric": name,
                    "value": float(value),
                }
            )

    def series(self, clip: int, phase: str) -> tuple[list[int], list[float]]:
        """Step indices and values for one clip/phase, in recording order."""
        steps, values = [], []
        for row in self.rows:
            if row["clip"] == clip and row["phase"] == phase:
                steps.append(row["step_index"])
                values.append(row["value"])
        return steps, values

    def clips(self) -> list[int]:
        return sorted({row["clip"] for row in self.rows})


def write_metrics_csv(path: str | os.PathLike, recorder: RunRecorder) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        writer.writerows(recorder.rows)


def frame_distances(clips: list[np.ndarray]) -> list[dict]:
    """L2 distance from each frame to its predecessor across the whole video.

    The first frame of clip p measures against the last frame of clip p-1, so
    rows tagged boundary=1 show how smoothly clips join.
    """
    rows = []
    prev = None
    index = 0
    for p, clip in enumerate(clips):
        for n in range(clip.shape[0]):
            frame = clip[n]
            if prev is not None:
                rows.append(
                    {
                        "frame_index": index,
                        "clip": p,
                        "frame_in_clip": n,
                        "boundary": 1 if n == 0 else 0,
                        "distance": float(np.linalg.norm(frame - prev)),
                    }
                )
            prev = frame
            index += 1
    return rows


def write_continuity_csv(path: str | os.PathLike, clips: list[np.ndarray]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=("frame_index", "clip", "frame_in_clip", "boundary", "distance")
        )
        writer.writeheader()
        writer.writerows(frame_distances(clips))


def loss_figure(recorder: RunRecorder) -> Figure:
    """Guidance losses per step, one panel per phase, one line per clip."""
    phases = [ph for ph in ("invert", "sample") if any(r["phase"] == ph for r in recorder.rows)]
    fig = Figure(figsize=(6.0, 2.8 * max(len(phases), 1)))
    axes = fig.subplots(max(len(phases), 1), 1, squeeze=False)[:, 0]
    for ax, phase in zip(axes, phases):
        for clip in recorder.clips():
            steps, values = recorder.series(clip, phase)
            if steps:
                ax.plot(steps, values, label=f"clip {clip}")
        ax.set_yscale("log")
        ax.set_xlabel("step")
        ax.set_ylabel(f"{phase} loss")
        ax.legend(fontsize="small")
    fig.tight_layout()
    return fig


def continuity_figure(clips: list[np.ndarray]) -> Figure:
    """Consecutive-frame distance across the video with clip joins marked."""
    rows = frame_distances(clips)
    fig = Figure(figsize=(6.0, 3.0))
    ax = fig.subplots()
    if rows:
        xs = [r["frame_index"] for r in rows]
        ys = [r["distance"] for r in rows]
        ax.plot(xs, ys, marker=".", linewidth=1.0)
        for r in rows:
            if r["boundary"]:
                ax.axvline(r["frame_index"], color="tab:red", alpha=0.4, linestyle="--")
    ax.set_xlabel("frame")
    ax.set_ylabel("distance to previous frame")
    fig.tight_layout()
    return fig


def frame_grid_figure(clip: np.ndarray, channel: int = 0, max_frames: int = 16) -> Figure:
    """One channel of up to max_frames frames as an image grid."""
    if clip.ndim != 4:
        raise ValueError(f"clip must be 4-d, got shape {clip.shape}")
    count = min(clip.shape[0], max_frames)
    cols = min(count, 8)
    grid_rows = (count + cols - 1) // cols
    fig = Figure(figsize=(1.4 * cols, 1.4 * grid_rows))
    axes = np.atleast_2d(fig.subplots(grid_rows, cols, squeeze=False))
    vmin, vmax = float(clip[:, channel].min()), float(clip[:, channel].max())
    for i in range(grid_rows * cols):
        ax = axes[i // cols][i % cols]
        ax.set_axis_off()
        if i < count:
            ax.imshow(clip[i, channel], vmin=vmin, vmax=vmax, cmap="viridis")
            ax.set_title(str(i), fontsize=6)
    fig.tight_layout()
    return fig


def render_report(
    out_dir: str | os.PathLike,
    clips: list[np.ndarray],
    recorder: RunRecorder | None = None,
) -> list[Path]:
    """Write the delimited metrics and their figures; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    continuity_csv = out_dir / "continuity.csv"
    write_continuity_csv(continuity_csv, clips)
    written.append(continuity_csv)
    continuity_png = out_dir / "continuity.png"
    continuity_figure(clips).savefig(continuity_png, dpi=120)
    written.append(continuity_png)

    if recorder is not None and recorder.rows:
        metrics_csv = out_dir / "guidance_losses.csv"
        write_metrics_csv(metrics_csv, recorder)
        written.append(metrics_csv)
        losses_png = out_dir / "guidance_losses.png"
        loss_figure(recorder).savefig(losses_png, dpi=120)
        written.append(losses_png)

    if clips:
        grid_png = out_dir / "last_clip_frames.png"
        frame_grid_figure(clips[-1]).savefig(grid_png, dpi=120)
        written.append(grid_png)
    return written
