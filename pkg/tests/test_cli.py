import csv
import json

import numpy as np
import pytest

from mevg.cli import EXIT_CONFIG, EXIT_IO, EXIT_PREDICTOR, main
from mevg.latent_io import load_latent, save_latent


def write_config(tmp_path, name="run.json", **overrides):
    cfg = {
        "scenario": {"prompts": ["first event", "second event"]},
        "steps": 5,
        "frames": 4,
        "frame_shape": [1, 8, 8],
        "delta_lfai": 8.0,
        "delta_sgs": 1.0,
        "seed": 0,
        "out": str(tmp_path / "out"),
    }
    cfg.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def test_run_writes_expected_artifacts(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["--config", str(cfg)]) == 0
    out = tmp_path / "out"
    clip = load_latent(out / "clip_000.lat")
    assert clip.shape == (4, 1, 8, 8)
    assert load_latent(out / "clip_001.lat").shape == (4, 1, 8, 8)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["scenario"]["prompts"] == ["first event", "second event"]
    assert manifest["versions"]["mevg"]
    assert len(manifest["clip_seconds"]) == 2
    assert manifest["artifacts"]["clip_000.lat"]
    for name in ("continuity.csv", "continuity.png", "guidance_losses.csv",
                 "guidance_losses.png", "last_clip_frames.png"):
        assert (out / name).exists()


def test_identical_config_reproduces_latents_bitwise(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    for name in ("clip_000.lat", "clip_001.lat"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_manifest_rerun_reproduces_latents(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["--config", str(cfg)]) == 0
    manifest = tmp_path / "out" / "manifest.json"
    assert main(["--config", str(manifest), "--out", str(tmp_path / "again")]) == 0
    assert (tmp_path / "out" / "clip_001.lat").read_bytes() == (
        tmp_path / "again" / "clip_001.lat"
    ).read_bytes()


def test_flag_overrides_reach_manifest(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["--config", str(cfg), "--delta-sgs", "0", "--seed", "9"]) == 0
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["config"]["delta_sgs"] == 0.0
    assert manifest["config"]["seed"] == 9


def test_different_seed_changes_latents(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "clip_000.lat").read_bytes() != (
        tmp_path / "b" / "clip_000.lat"
    ).read_bytes()


def test_scenario_file_and_story_splitting(tmp_path):
    (tmp_path / "scenario.json").write_text(
        json.dumps({"story": "The fox jumps. Then the fox rests.", "num_prompts": 2})
    )
    cfg = write_config(tmp_path, scenario="scenario.json")
    assert main(["--config", str(cfg)]) == 0
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["config"]["scenario"]["prompts"] == ["The fox jumps", "The fox rests"]


def test_image_seeded_run(tmp_path):
    seed_clip = np.random.default_rng(3).standard_normal((1, 1, 8, 8)).astype(np.float32)
    save_latent(tmp_path / "seed.lat", seed_clip)
    cfg = write_config(
        tmp_path,
        scenario={"prompts": ["only event"], "seed_image_latent": "seed.lat"},
    )
    assert main(["--config", str(cfg)]) == 0
    assert load_latent(tmp_path / "out" / "clip_000.lat").shape == (4, 1, 8, 8)


def test_sweep_runs_subdirectories(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["--config", str(cfg), "--sweep", "delta_sgs=0.5,1.5"]) == 0
    out = tmp_path / "out"
    for label, value in [("delta_sgs_0.5", 0.5), ("delta_sgs_1.5", 1.5)]:
        sub = json.loads((out / label / "manifest.json").read_text())
        assert sub["config"]["delta_sgs"] == value
        assert sub["config"]["sweep"] is None
        assert (out / label / "clip_000.lat").exists()
    with open(out / "sweep_summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["run"] for r in rows] == ["delta_sgs_0.5", "delta_sgs_1.5"]
    assert all(float(r["mean_interframe_distance"]) > 0 for r in rows)


def test_config_sweep_grid_used_without_flag(tmp_path):
    cfg = write_config(tmp_path, sweep={"delta_sgs": [0.5]})
    assert main(["--config", str(cfg)]) == 0
    assert (tmp_path / "out" / "delta_sgs_0.5" / "manifest.json").exists()


@pytest.mark.parametrize(
    "argv_extra,overrides,code",
    [
        ([], {"scenario": {}}, EXIT_CONFIG),  # neither prompts nor story
        ([], {"scenario": {"prompts": "not a list"}}, EXIT_CONFIG),
        ([], {"unknown_knob": 1}, EXIT_CONFIG),
        ([], {"steps": 0}, EXIT_CONFIG),
        ([], {"frame_shape": [0, 8]}, EXIT_CONFIG),
        ([], {"sweep": {"frames": [1, 2]}}, EXIT_CONFIG),
        ([], {"predictor": "bridge"}, EXIT_PREDICTOR),
        (["--predictor", "bridge", "--bridge-addr", "127.0.0.1:1"], {}, EXIT_PREDICTOR),
    ],
)
def test_exit_codes(tmp_path, argv_extra, overrides, code):
    cfg = write_config(tmp_path, **overrides)
    assert main(["--config", str(cfg), *argv_extra]) == code


def test_missing_config_file_is_config_error(tmp_path):
    assert main(["--config", str(tmp_path / "none.json")]) == EXIT_CONFIG


def test_malformed_json_is_config_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["--config", str(path)]) == EXIT_CONFIG


def test_config_error_leaves_no_outputs(tmp_path):
    cfg = write_config(tmp_path, scenario={})
    assert main(["--config", str(cfg)]) == EXIT_CONFIG
    assert not (tmp_path / "out").exists()


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    cfg = write_config(tmp_path, out=str(blocker / "sub"))
    assert main(["--config", str(cfg)]) == EXIT_IO


def test_missing_seed_latent_is_config_error(tmp_path):
    cfg = write_config(
        tmp_path, scenario={"prompts": ["a"], "seed_image_latent": "absent.lat"}
    )
    assert main(["--config", str(cfg)]) == EXIT_CONFIG
