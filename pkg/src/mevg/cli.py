"""Command-line entry point.

`mevg --config run.json` resolves a scenario (literal prompts or a story fed
through the splitter), builds the schedule and predictor, generates every
clip, and writes latent files, a manifest, and diagnostics into --out.  The
manifest embeds the fully resolved config, so pointing --config back at a
manifest reproduces the run; in analytic mode the latent files come back
bit-identical.  Exit codes: 2 config, 3 predictor setup, 4 disk.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import os
import platform
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import RunRecorder, frame_distances, render_report
from .driver import Scenario, generate_from_image, generate_multi_event
from .errors import (
    BridgeProtocolError,
    BridgeTimeoutError,
    ConfigError,
    LatentIOError,
    MevgError,
)
from .latent_init import GuidanceConfig
from .latent_io import load_latent, save_latent
from .predictors import AnalyticGaussianPredictor, means_from_conditions
from .prompt_gen import LlmClientConfig, LlmPromptClient, PromptRequest, split_scenario
from .schedule import build_schedule

EXIT_CONFIG = 2
EXIT_PREDICTOR = 3
EXIT_IO = 4

DEFAULTS = {
    "steps": 50,
    "num_train_steps": 1000,
    "beta_start": 1e-4,
    "beta_end": 0.02,
    "schedule_kind": "linear",
    "frames": 16,
    "delta_lfai": 1000.0,
    "delta_sgs": 7.0,
    "eta": 0.0,
    "seed": 0,
    "predictor": "analytic",
    "bridge_addr": None,
    "dynamic_noise": True,
    "kappa_kind": "exp",
    "kappa_value": 1.0,
    "reduction": "mean",
    "affected_frames_lfai": 1,
    "sgs_symmetric": False,
    "frame_shape": [4, 32, 32],
    "condition_spread": 1.0,
    "prior_var": 1.0,
    "means_seed": 0,
    "decode_frames": False,
    "sweep": None,
}


class PredictorInitError(MevgError, RuntimeError):
    """Predictor selection or backend connection failed."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mevg",
        description="Multi-event video latent generation from chained prompts.",
    )
    parser.add_argument("--config", required=True, help="run config or manifest JSON file")
    parser.add_argument("--predictor", choices=["analytic", "bridge"], help="noise predictor")
    parser.add_argument("--bridge-addr", help="host:port of a model bridge server")
    parser.add_argument("--steps", type=int, help="inference steps")
    parser.add_argument("--frames", type=int, help="frames per clip")
    parser.add_argument("--delta-lfai", type=float, help="last-frame guidance weight")
    parser.add_argument("--delta-sgs", type=float, help="structure guidance weight")
    parser.add_argument("--eta", type=float, help="stochasticity of the sampler")
    parser.add_argument("--seed", type=int, help="run seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument(
        "--sweep",
        help='parameter grid, e.g. "delta_sgs=0.01,0.1,7,15,50"; overrides the config grid',
    )
    return parser


def _load_json(path: Path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return data


def _parse_sweep_flag(text: str) -> dict:
    name, sep, values = text.partition("=")
    if not sep or not values:
        raise ConfigError(f'sweep must look like "name=v1,v2,...", got {text!r}')
    try:
        return {name.strip(): [float(v) for v in values.split(",")]}
    except ValueError as exc:
        raise ConfigError(f"sweep values must be numbers: {values!r}") from exc


def load_run_config(args: argparse.Namespace) -> dict:
    """Merge defaults, the config file (or a manifest's embedded config), and
    command-line overrides into one resolved dict."""
    path = Path(args.config)
    raw = _load_json(path)
    if "config" in raw and isinstance(raw["config"], dict):
        raw = raw["config"]  # manifest re-run
    cfg = dict(DEFAULTS)
    unknown = set(raw) - set(DEFAULTS) - {"scenario", "out", "llm"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg.update(raw)
    for flag in ("predictor", "bridge_addr", "steps", "frames", "delta_lfai",
                 "delta_sgs", "eta", "seed", "out"):
        value = getattr(args, flag)
        if value is not None:
            cfg[flag] = value
    if args.sweep is not None:
        cfg["sweep"] = _parse_sweep_flag(args.sweep)
    if "scenario" not in cfg:
        raise ConfigError("config needs a 'scenario' (inline object or file path)")
    if not cfg.get("out"):
        raise ConfigError("an output directory is required (config 'out' or --out)")
    cfg["scenario"] = resolve_scenario(cfg["scenario"], path.parent, cfg)
    _validate_run_config(cfg)
    return cfg


def resolve_scenario(raw, base_dir: Path, cfg: dict) -> dict:
    """Normalize to {"prompts": [...], "seed_image_latent": path|None}."""
    if isinstance(raw, str):
        raw = _load_json(base_dir / raw)
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be an object or a path to one")
    out = {"seed_image_latent": raw.get("seed_image_latent")}
    if "prompts" in raw:
        prompts = raw["prompts"]
        if not isinstance(prompts, list) or not all(isinstance(p, str) for p in prompts):
            raise ConfigError("scenario prompts must be a list of strings")
        out["prompts"] = prompts
    elif "story" in raw:
        req = PromptRequest(story=raw["story"], num_prompts=int(raw.get("num_prompts", 1)))
        client = None
        llm = cfg.get("llm") or raw.get("llm")
        if llm:
            client = LlmPromptClient(LlmClientConfig(**llm))
        out["prompts"] = split_scenario(req, client)
    else:
        raise ConfigError("scenario needs either 'prompts' or 'story'")
    if out["seed_image_latent"] is not None:
        seed_path = base_dir / out["seed_image_latent"]
        if not seed_path.exists():
            raise ConfigError(f"seed_image_latent file not found: {seed_path}")
        out["seed_image_latent"] = str(seed_path)
    return out


def _validate_run_config(cfg: dict) -> None:
    if cfg["predictor"] not in ("analytic", "bridge"):
        raise ConfigError(f"predictor must be analytic or bridge, got {cfg['predictor']!r}")
    for key in ("steps", "frames", "num_train_steps"):
        if int(cfg[key]) < 1:
            raise ConfigError(f"{key} must be >= 1, got {cfg[key]}")
    shape = cfg["frame_shape"]
    if len(shape) != 3 or any(int(d) < 1 for d in shape):
        raise ConfigError(f"frame_shape must be three positive dims, got {shape}")
    if cfg["sweep"] is not None:
        if not isinstance(cfg["sweep"], dict) or not cfg["sweep"]:
            raise ConfigError("sweep must map parameter names to value lists")
        for key, values in cfg["sweep"].items():
            if key not in ("delta_lfai", "delta_sgs", "eta"):
                raise ConfigError(f"sweep parameter {key!r} is not sweepable")
            if not isinstance(values, list) or not values:
                raise ConfigError(f"sweep values for {key} must be a nonempty list")


def make_predictor(cfg: dict, scenario: Scenario, sched):
    if cfg["predictor"] == "analytic":
        means = means_from_conditions(
            scenario.conditions(),
            tuple(int(d) for d in cfg["frame_shape"]),
            seed=int(cfg["means_seed"]),
            spread=float(cfg["condition_spread"]),
        )
        return AnalyticGaussianPredictor(sched, means, prior_var=float(cfg["prior_var"]))
    addr = cfg.get("bridge_addr")
    if not addr:
        raise PredictorInitError("bridge predictor needs --bridge-addr or config bridge_addr")
    try:
        from .bridge import BridgePredictor

        return BridgePredictor.connect(addr)
    except MevgError:
        raise
    except Exception as exc:
        raise PredictorInitError(f"cannot set up bridge predictor at {addr}: {exc}") from exc


def _write_json_atomic(path: Path, obj: dict) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def run_single(cfg: dict, out_dir: Path) -> dict:
    """One generation run into out_dir; returns the manifest."""
    sched = build_schedule(
        int(cfg["num_train_steps"]),
        float(cfg["beta_start"]),
        float(cfg["beta_end"]),
        cfg["schedule_kind"],
        eta=float(cfg["eta"]),
        num_inference_steps=int(cfg["steps"]),
    )
    seed_latent = None
    if cfg["scenario"]["seed_image_latent"] is not None:
        seed_latent = load_latent(cfg["scenario"]["seed_image_latent"])[0]
    scenario = Scenario(
        prompts=tuple(cfg["scenario"]["prompts"]),
        frames_per_clip=int(cfg["frames"]),
        seed_image_latent=seed_latent,
        rng_seed=int(cfg["seed"]),
    )
    guidance = GuidanceConfig(
        delta_lfai=float(cfg["delta_lfai"]),
        delta_sgs=float(cfg["delta_sgs"]),
        reduction=cfg["reduction"],
        affected_frames_lfai=int(cfg["affected_frames_lfai"]),
        rng_seed=int(cfg["seed"]),
        dynamic_noise=bool(cfg["dynamic_noise"]),
        kappa_kind=cfg["kappa_kind"],
        kappa_value=float(cfg["kappa_value"]),
        sgs_symmetric=bool(cfg["sgs_symmetric"]),
    )
    predictor = make_predictor(cfg, scenario, sched)
    recorder = RunRecorder()
    generate = generate_from_image if seed_latent is not None else generate_multi_event
    try:
        record = generate(scenario, predictor, sched, guidance, recorder=recorder)

        out_dir.mkdir(parents=True, exist_ok=True)
        artifacts = {}
        for i, clip in enumerate(record.clips):
            name = f"clip_{i:03d}.lat"
            save_latent(out_dir / name, clip)
            artifacts[name] = hashlib.sha256((out_dir / name).read_bytes()).hexdigest()
        for written in render_report(out_dir, record.clips, recorder):
            artifacts.setdefault(written.name, None)
        if cfg["predictor"] == "bridge" and cfg["decode_frames"]:
            frames_dir = out_dir / "frames"
            frames_dir.mkdir(exist_ok=True)
            predictor.decode_clips(record.clips, frames_dir)
    finally:
        close = getattr(predictor, "close", None)
        if close is not None:
            close()

    manifest = {
        "config": {k: v for k, v in cfg.items() if k != "out"} | {"out": str(out_dir)},
        "versions": {
            "mevg": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "clip_seconds": record.clip_seconds,
        "artifacts": artifacts,
    }
    _write_json_atomic(out_dir / "manifest.json", manifest)
    return manifest


def _sweep_runs(cfg: dict):
    grid = cfg["sweep"]
    names = sorted(grid)
    for combo in itertools.product(*(grid[name] for name in names)):
        sub = dict(cfg)
        sub["sweep"] = None
        label_parts = []
        for name, value in zip(names, combo):
            sub[name] = value
            label_parts.append(f"{name}_{value:g}")
        yield "-".join(label_parts), sub


def run(cfg: dict) -> int:
    out_dir = Path(cfg["out"])
    if cfg["sweep"] is None:
        run_single(cfg, out_dir)
        return 0
    summary_rows = []
    for label, sub in _sweep_runs(cfg):
        sub_dir = out_dir / label
        manifest = run_single(sub, sub_dir)
        clips = [load_latent(sub_dir / name) for name in sorted(manifest["artifacts"])
                 if name.endswith(".lat")]
        rows = frame_distances(clips)
        within = [r["distance"] for r in rows if not r["boundary"]]
        across = [r["distance"] for r in rows if r["boundary"]]
        summary_rows.append(
            {
                "run": label,
                "delta_lfai": sub["delta_lfai"],
                "delta_sgs": sub["delta_sgs"],
                "eta": sub["eta"],
                "mean_interframe_distance": float(np.mean(within)) if within else 0.0,
                "mean_boundary_distance": float(np.mean(across)) if across else 0.0,
                "seconds": float(sum(manifest["clip_seconds"])),
            }
        )
    import csv

    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "sweep_summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(summary_rows[0]))
        writer.writeheader()
        writer.writerows(summary_rows)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PredictorInitError, BridgeProtocolError, BridgeTimeoutError) as exc:
        print(f"predictor error: {exc}", file=sys.stderr)
        return EXIT_PREDICTOR
    except (LatentIOError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
