"""Multi-event orchestration: chains per-prompt clips through trace hand-off.

Clip 0 samples from pure Gaussian noise (text mode) or anchors to a seed frame
latent (image mode); every later clip starts from a guided inversion of its
predecessor's repeated last frame and samples against that predecessor's
denoised trace.  Only the immediately preceding clip and trace feed each step,
so generation streams over prompts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .ddim import ddim_invert
from .errors import ConfigError, ShapeError
from .guided_sampler import SamplingResult, sample_clip
from .latent_init import DenoisedTrace, GuidanceConfig, initialize_latent, repeat_last_frame
from .predictors import Condition, NoisePredictor
from .schedule import DiffusionSchedule


@dataclass(eq=False)
class Scenario:
    """One multi-event run: ordered prompts plus clip geometry and seeding."""

    prompts: tuple[str, ...]
    frames_per_clip: int = 16
    seed_image_latent: np.ndarray | None = None
    rng_seed: int = 0

    def __post_init__(self):
        self.prompts = tuple(self.prompts)
        if not self.prompts or any(not p.strip() for p in self.prompts):
            raise ConfigError("prompts must be a nonempty list of nonempty strings")
        if self.frames_per_clip < 1:
            raise ConfigError(f"frames_per_clip must be >= 1, got {self.frames_per_clip}")
        if self.seed_image_latent is not None and self.seed_image_latent.ndim != 3:
            raise ShapeError(
                f"seed_image_latent must be a single frame (c, h, w), got {self.seed_image_latent.shape}"
            )

    def conditions(self) -> list[Condition]:
        return [Condition(id=p, payload=p.encode()) for p in self.prompts]


@dataclass(eq=False)
class GenerationRecord:
    """All clips and traces of a run, with the resolved config and timings."""

    clips: list[np.ndarray]
    traces: list[DenoisedTrace]
    config: dict
    clip_seconds: list[float] = field(default_factory=list)


def _validate(scn: Scenario, predictor: NoisePredictor, cfg: GuidanceConfig) -> None:
    if cfg.delta_sgs > 0.0 and scn.frames_per_clip < 2:
        raise ConfigError("frames_per_clip must be >= 2 when structure guidance is enabled")
    if cfg.affected_frames_lfai > scn.frames_per_clip:
        raise ConfigError(
            f"affected_frames_lfai={cfg.affected_frames_lfai} exceeds frames_per_clip={scn.frames_per_clip}"
        )


def _config_snapshot(scn: Scenario, sched: DiffusionSchedule, cfg: GuidanceConfig) -> dict:
    return {
        "prompts": list(scn.prompts),
        "frames_per_clip": scn.frames_per_clip,
        "rng_seed": scn.rng_seed,
        "image_seeded": scn.seed_image_latent is not None,
        "num_train_steps": sched.num_train_steps,
        "num_inference_steps": sched.num_inference_steps,
        "eta": sched.eta,
        "delta_lfai": cfg.delta_lfai,
        "delta_sgs": cfg.delta_sgs,
        "reduction": cfg.reduction,
        "affected_frames_lfai": cfg.affected_frames_lfai,
        "dynamic_noise": cfg.dynamic_noise,
        "kappa_kind": cfg.kappa_kind,
        "kappa_value": cfg.kappa_value,
        "sgs_symmetric": cfg.sgs_symmetric,
    }


def synthesize_seed_trace(
    seed_latent: np.ndarray,
    num_frames: int,
    predictor: NoisePredictor,
    cond: Condition,
    sched: DiffusionSchedule,
) -> DenoisedTrace:
    """Unguided inversion of the duplicated seed frame, recording the denoised
    last frame per step.  Gives the first clip the anchor trace a previous
    clip would normally provide."""
    trace = DenoisedTrace()
    ddim_invert(
        repeat_last_frame(seed_latent[None], num_frames),
        predictor,
        cond,
        sched,
        observe=lambda t, x_hat: trace.__setitem__(t, x_hat[-1].copy()),
    )
    return trace


def iter_multi_event(
    scn: Scenario,
    predictor: NoisePredictor,
    sched: DiffusionSchedule,
    cfg: GuidanceConfig,
    recorder=None,
) -> Iterator[SamplingResult]:
    """Yield one SamplingResult per prompt, retaining only the previous clip
    and trace between iterations."""
    _validate(scn, predictor, cfg)
    frame_shape = predictor.frame_shape
    streams = np.random.SeedSequence(scn.rng_seed).spawn(2 * len(scn.prompts))
    conds = scn.conditions()

    prev_clip: np.ndarray | None = None
    prev_trace: DenoisedTrace | None = None
    for p, cond in enumerate(conds):
        if recorder is not None:
            recorder.clip = p
        init_rng = np.random.default_rng(streams[2 * p])
        sample_rng = np.random.default_rng(streams[2 * p + 1])
        if p == 0 and scn.seed_image_latent is not None:
            seed = scn.seed_image_latent.astype(np.float32)
            if seed.shape != frame_shape:
                raise ShapeError(f"seed latent shape {seed.shape} != frame shape {frame_shape}")
            prev_clip = seed[None]
            prev_trace = synthesize_seed_trace(seed, scn.frames_per_clip, predictor, cond, sched)
        if prev_clip is None:
            x_T = init_rng.standard_normal((scn.frames_per_clip, *frame_shape), dtype=np.float32)
        else:
            x_T = initialize_latent(
                prev_clip,
                prev_trace,
                predictor,
                cond,
                sched,
                cfg,
                num_frames=scn.frames_per_clip,
                rng=init_rng,
                recorder=recorder,
            )
        result = sample_clip(
            x_T,
            predictor,
            cond,
            sched,
            cfg,
            anchor_trace=prev_trace,
            rng=sample_rng,
            recorder=recorder,
        )
        yield result
        prev_clip, prev_trace = result.clip, result.trace


def generate_multi_event(
    scn: Scenario,
    predictor: NoisePredictor,
    sched: DiffusionSchedule,
    cfg: GuidanceConfig,
    recorder=None,
) -> GenerationRecord:
    """Generate every clip of the scenario and collect them into a record."""
    record = GenerationRecord(clips=[], traces=[], config=_config_snapshot(scn, sched, cfg))
    start = time.perf_counter()
    for result in iter_multi_event(scn, predictor, sched, cfg, recorder=recorder):
        now = time.perf_counter()
        record.clips.append(result.clip)
        record.traces.append(result.trace)
        record.clip_seconds.append(now - start)
        start = now
    return record


def generate_from_image(
    scn: Scenario,
    predictor: NoisePredictor,
    sched: DiffusionSchedule,
    cfg: GuidanceConfig,
    recorder=None,
) -> GenerationRecord:
    """Image-seeded generation: scn.seed_image_latent anchors the first clip."""
    if scn.seed_image_latent is None:
        raise ConfigError("generate_from_image requires scenario.seed_image_latent")
    return generate_multi_event(scn, predictor, sched, cfg, recorder=recorder)
