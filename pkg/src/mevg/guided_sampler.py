"""Structure-guided DDIM sampling: a causal frame sweep nudges each denoised
frame toward its predecessor (and frame 0 toward the previous clip's trace),
then the updated estimate recombines with the original predicted noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ddim import DenoisedObservation, ddim_recompose, denoised_observation
from .errors import ShapeError
from .latent_init import DenoisedTrace, GuidanceConfig
from .predictors import Condition, NoisePredictor
from .schedule import DiffusionSchedule


def sgs_loss(x_hat: DenoisedObservation, anchor: np.ndarray | None, cfg: GuidanceConfig) -> float:
    """Pre-sweep structure loss: reduction(||x[n] - x[n-1]||^2) summed over
    consecutive pairs, plus the anchor term for frame 0 when present."""
    v = x_hat.value.astype(np.float64)
    m = v[0].size
    total = 0.0
    if anchor is not None:
        total += float(((v[0] - anchor) ** 2).sum())
    if v.shape[0] > 1:
        total += float(((v[1:] - v[:-1]) ** 2).sum())
    return total / m if cfg.reduction == "mean" else total


def sgs_guidance(
    x_hat: DenoisedObservation, anchor: np.ndarray | None, cfg: GuidanceConfig
) -> DenoisedObservation:
    """One causal sweep over frames n = 0..F-1.

    Frame 0 descends on reduction(||x[0] - anchor||^2) when an anchor frame is
    given (first clip has none); each later frame descends on
    reduction(||x[n] - x[n-1]||^2) against its already-updated predecessor, so
    corrections propagate forward within a single sweep.  With `sgs_symmetric`
    the pair gradient also flows backward into frame n-1.
    """
    if anchor is not None and anchor.shape != x_hat.value.shape[1:]:
        raise ShapeError(f"anchor shape {anchor.shape} != frame shape {x_hat.value.shape[1:]}")
    if cfg.delta_sgs == 0.0:
        return x_hat
    value = x_hat.value.copy()
    step = cfg.delta_sgs * cfg.grad_scale(value[0].size)
    if anchor is not None:
        value[0] -= step * (value[0] - anchor)
    for n in range(1, value.shape[0]):
        diff = value[n] - value[n - 1]
        value[n] -= step * diff
        if cfg.sgs_symmetric:
            value[n - 1] += step * diff
    return DenoisedObservation(value.astype(np.float32), x_hat.t)


@dataclass(eq=False)
class SamplingResult:
    """A sampled clip plus the per-step trace its successor will anchor to."""

    clip: np.ndarray
    trace: DenoisedTrace


def sample_clip(
    x_T: np.ndarray,
    predictor: NoisePredictor,
    cond: Condition,
    sched: DiffusionSchedule,
    cfg: GuidanceConfig,
    anchor_trace: DenoisedTrace | None = None,
    rng: np.random.Generator | None = None,
    recorder=None,
) -> SamplingResult:
    """Run guided DDIM sampling from x_T down the full inference sequence.

    Each step predicts noise once, guides the denoised observation, records its
    last frame into the output trace, and recomposes the next latent from the
    updated observation with the original prediction.  `rng` is only consulted
    when the schedule's eta makes steps stochastic.
    """
    if x_T.ndim != 4:
        raise ShapeError(f"x_T must be (frames, c, h, w), got {x_T.shape}")
    if not np.all(np.isfinite(x_T)):
        raise ValueError("x_T contains non-finite values")
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)

    x = x_T.astype(np.float32)
    trace = DenoisedTrace()
    steps = [int(t) for t in sched.timesteps[::-1]]
    for i, t in enumerate(steps):
        eps_hat = predictor.predict(x, t, cond)
        x_hat = denoised_observation(x, eps_hat, t, sched)
        anchor = anchor_trace[t] if anchor_trace is not None else None
        if recorder is not None:
            recorder.record(
                phase="sample",
                step_index=i,
                t=t,
                sgs_loss=sgs_loss(x_hat, anchor, cfg),
            )
        x_hat = sgs_guidance(x_hat, anchor, cfg)
        trace[t] = x_hat.value[-1].copy()
        noise = None
        if sched.sigma(t) > 0.0:
            noise = rng.standard_normal(x.shape, dtype=np.float32)
        x = ddim_recompose(x_hat, eps_hat, sched, noise)
    return SamplingResult(clip=x, trace=trace)
