"""Deterministic DDIM stepping: denoised observations, sampling, inversion.

Sampling walks the schedule's inference sequence downward; inversion walks the
same sequence upward.  Both directions share one predicted noise per step, and
the bottom of the chain is the clean boundary (alpha_bar treated as 1), so a
full sampling pass ends on the denoised observation itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ScheduleBoundaryError, ShapeError
from .schedule import DiffusionSchedule


@dataclass(frozen=True, eq=False)
class DenoisedObservation:
    """Estimate of the clean clip implied by (x_t, eps_hat) at step t."""

    value: np.ndarray  # (frames, c, h, w) float32
    t: int

    def __post_init__(self):
        if self.value.ndim != 4:
            raise ShapeError(f"denoised observation must be 4-d, got shape {self.value.shape}")


def _check_pair(x_t: np.ndarray, eps_hat: np.ndarray) -> None:
    if x_t.shape != eps_hat.shape:
        raise ShapeError(f"latent shape {x_t.shape} != eps_hat shape {eps_hat.shape}")
    if x_t.ndim != 4:
        raise ShapeError(f"latents must be 4-d (frames, c, h, w), got {x_t.shape}")


def denoised_observation(
    x_t: np.ndarray, eps_hat: np.ndarray, t: int, sched: DiffusionSchedule
) -> DenoisedObservation:
    """x_hat_t = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)."""
    _check_pair(x_t, eps_hat)
    abar = sched.alpha_bar(t)
    value = (x_t - (1.0 - abar) ** 0.5 * eps_hat) / abar**0.5
    return DenoisedObservation(value.astype(np.float32), t)


def ddim_recompose(
    x_hat: DenoisedObservation,
    eps_hat: np.ndarray,
    sched: DiffusionSchedule,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """One DDIM step down from x_hat's step t:

        x_prev = sqrt(abar_prev) x_hat + sqrt(1 - abar_prev - sigma_t^2) eps_hat - sigma_t n

    abar_prev refers to the previous inference timestep (1.0 at the clean
    boundary, which makes the final step return x_hat itself).  Guided samplers
    call this directly so an updated x_hat recombines with the original eps_hat.
    """
    _check_pair(x_hat.value, eps_hat)
    t = x_hat.t
    abar_prev = sched.alpha_bar_prev(t)
    sigma = sched.sigma(t)
    out = abar_prev**0.5 * x_hat.value + (1.0 - abar_prev - sigma**2) ** 0.5 * eps_hat
    if sigma > 0.0:
        if noise is None:
            raise ValueError(f"sigma_t={sigma:.3g} > 0 at t={t} requires a noise draw")
        if noise.shape != x_hat.value.shape:
            raise ShapeError(f"noise shape {noise.shape} != latent shape {x_hat.value.shape}")
        out = out - sigma * noise
    return out.astype(np.float32)


def ddim_sample_step(
    x_t: np.ndarray,
    eps_hat: np.ndarray,
    t: int,
    sched: DiffusionSchedule,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """Unguided DDIM update x_t -> x_prev (computes the denoised observation internally)."""
    return ddim_recompose(denoised_observation(x_t, eps_hat, t, sched), eps_hat, sched, noise)


def ddim_invert_step(
    x_hat: DenoisedObservation,
    eps_hat: np.ndarray,
    t: int,
    sched: DiffusionSchedule,
) -> np.ndarray:
    """One deterministic inversion step up from t:

        x_next = sqrt(abar_next) x_hat + sqrt(1 - abar_next) eps_hat

    The same eps_hat that produced x_hat is reused for the ascent; no
    fixed-point refinement.  Raises at the top of the inference sequence.
    """
    _check_pair(x_hat.value, eps_hat)
    if t != x_hat.t:
        raise ValueError(f"step argument t={t} disagrees with x_hat.t={x_hat.t}")
    t_next = sched.next_timestep(t)
    if t_next is None:
        raise ScheduleBoundaryError(f"no inference timestep above t={t}")
    abar_next = sched.alpha_bar(t_next)
    out = abar_next**0.5 * x_hat.value + (1.0 - abar_next) ** 0.5 * eps_hat
    return out.astype(np.float32)


def ddim_invert(
    x0: np.ndarray,
    predictor,
    cond,
    sched: DiffusionSchedule,
    observe=None,
) -> np.ndarray:
    """Plain deterministic ascent of a clean clip to the top inference timestep.

    Each step predicts at the target timestep t on the current latent, forms
    the denoised observation with the level the latent sits at (alpha_bar of
    the previous inference step, 1.0 at the clean boundary), and lifts with
    alpha_bar(t).  This mirrors the sampling step exactly, so sampling the
    result back recovers x0 to discretization error.  `observe(t, x_hat)` sees
    the per-step observation before the lift.
    """
    x = np.asarray(x0, dtype=np.float32)
    if x.ndim != 4:
        raise ShapeError(f"latents must be 4-d (frames, c, h, w), got {x.shape}")
    for t in sched.timesteps:
        t = int(t)
        eps_hat = predictor.predict(x, t, cond)
        abar_cur = sched.alpha_bar_prev(t)
        x_hat = ((x - (1.0 - abar_cur) ** 0.5 * eps_hat) / abar_cur**0.5).astype(np.float32)
        if observe is not None:
            observe(t, x_hat)
        abar_t = sched.alpha_bar(t)
        x = (abar_t**0.5 * x_hat + (1.0 - abar_t) ** 0.5 * eps_hat).astype(np.float32)
    return x
