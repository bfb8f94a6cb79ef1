import csv
import math

import numpy as np
from matplotlib.figure import Figure

from mevg.diagnostics import (
    RunRecorder,
    continuity_figure,
    frame_distances,
    frame_grid_figure,
    loss_figure,
    render_report,
    write_continuity_csv,
    write_metrics_csv,
)


def make_recorder():
    rec = RunRecorder()
    rec.clip = 0
    for i, t in enumerate([40, 20, 0]):
        rec.record(phase="sample", step_index=i, t=t, sgs_loss=10.0 / (i + 1))
    rec.clip = 1
    for i, t in enumerate([0, 20, 40]):
        rec.record(phase="invert", step_index=i, t=t, lfai_loss=float(i + 1))
    return rec


def test_recorder_rows_and_series():
    rec = make_recorder()
    assert len(rec.rows) == 6
    assert rec.clips() == [0, 1]
    steps, values = rec.series(0, "sample")
    assert steps == [0, 1, 2]
    assert values == [10.0, 5.0, 10.0 / 3]
    assert rec.series(0, "invert") == ([], [])
    assert rec.rows[0] == {
        "clip": 0,
        "phase": "sample",
        "step_index": 0,
        "t": 40,
        "metric": "sgs_loss",
        "value": 10.0,
    }


def test_metrics_csv_round_trip(tmp_path):
    rec = make_recorder()
    path = tmp_path / "metrics.csv"
    write_metrics_csv(path, rec)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    assert rows[3] == {
        "clip": "1",
        "phase": "invert",
        "step_index": "0",
        "t": "0",
        "metric": "lfai_loss",
        "value": "1.0",
    }


def test_frame_distances_hand_values():
    clip0 = np.zeros((2, 1, 2, 2), np.float32)
    clip0[1] = 1.0  # distance 2 from frame 0
    clip1 = np.full((2, 1, 2, 2), 2.0, np.float32)  # boundary distance 2, then 0
    rows = frame_distances([clip0, clip1])
    assert [r["frame_index"] for r in rows] == [1, 2, 3]
    assert [r["boundary"] for r in rows] == [0, 1, 0]
    assert [r["clip"] for r in rows] == [0, 1, 1]
    assert rows[0]["distance"] == math.sqrt(4.0)
    assert rows[1]["distance"] == math.sqrt(4.0)
    assert rows[2]["distance"] == 0.0
    assert frame_distances([clip0[:1]]) == []


def test_continuity_csv(tmp_path):
    clips = [np.zeros((2, 1, 2, 2), np.float32), np.ones((1, 1, 2, 2), np.float32)]
    path = tmp_path / "continuity.csv"
    write_continuity_csv(path, clips)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["boundary"] for r in rows] == ["0", "1"]
    assert float(rows[1]["distance"]) == 2.0


def test_figures_build_and_save(tmp_path):
    rec = make_recorder()
    clips = [np.random.default_rng(0).standard_normal((4, 1, 6, 6)).astype(np.float32)]
    for name, fig in [
        ("loss.png", loss_figure(rec)),
        ("continuity.png", continuity_figure(clips)),
        ("grid.png", frame_grid_figure(clips[0])),
    ]:
        assert isinstance(fig, Figure)
        out = tmp_path / name
        fig.savefig(out)
        assert out.read_bytes()[:4] == b"\x89PNG"


def test_frame_grid_rejects_bad_shape():
    try:
        frame_grid_figure(np.zeros((2, 2, 2), np.float32))
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError for 3-d input")


def test_render_report_with_recorder(tmp_path):
    rec = make_recorder()
    clips = [np.random.default_rng(1).standard_normal((3, 1, 4, 4)).astype(np.float32)]
    written = render_report(tmp_path / "report", clips, rec)
    names = sorted(p.name for p in written)
    assert names == [
        "continuity.csv",
        "continuity.png",
        "guidance_losses.csv",
        "guidance_losses.png",
        "last_clip_frames.png",
    ]
    for p in written:
        assert p.exists() and p.stat().st_size > 0


def test_render_report_without_recorder(tmp_path):
    clips = [np.zeros((2, 1, 4, 4), np.float32)]
    written = render_report(tmp_path, clips, None)
    names = sorted(p.name for p in written)
    assert names == ["continuity.csv", "continuity.png", "last_clip_frames.png"]
