"""Next-clip latent initialization: frame repetition, per-frame dynamic noise,
and last-frame-aligned guidance applied during DDIM inversion.

The inversion loop walks the inference sequence upward.  At each target step t
it predicts noise at t on the current latent, forms the clean estimate with the
*previous* level's alpha_bar (1.0 at the clean boundary), guides that estimate
toward the previous clip's recorded trace, and lifts it to level t.  One
prediction per step, reused for both the estimate and the lift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ddim import DenoisedObservation
from .errors import ConfigError, ShapeError, TraceMissingError
from .predictors import Condition, NoisePredictor
from .schedule import DiffusionSchedule

KAPPA_KINDS = ("exp", "exp-normalized", "constant")
REDUCTIONS = ("mean", "sum")


@dataclass(frozen=True)
class KappaSchedule:
    """Per-frame noise-retention weights kappa_n; +inf means frame n keeps its
    predicted noise untouched."""

    values: np.ndarray  # (frames,) float64

    def __post_init__(self):
        if self.values.ndim != 1 or len(self.values) == 0:
            raise ConfigError("kappa values must be a nonempty 1-d array")
        if np.any(np.isnan(self.values)) or np.any(self.values <= 0.0):
            raise ConfigError("kappa values must be positive (or +inf)")

    def __len__(self) -> int:
        return len(self.values)


def kappa_schedule(num_frames: int, kind: str = "exp", value: float = 1.0) -> KappaSchedule:
    """Noise-retention schedule over frame index n.

    "exp" is the default kappa_n = exp(-n): the first frame blends predicted
    and fresh noise equally, later frames are dominated by fresh noise.
    "exp-normalized" uses exp(-n / num_frames); "constant" holds `value`
    (value=+inf disables dynamic noise entirely) for ablations.
    """
    if num_frames < 1:
        raise ConfigError(f"num_frames must be >= 1, got {num_frames}")
    n = np.arange(num_frames, dtype=np.float64)
    if kind == "exp":
        values = np.exp(-n)
    elif kind == "exp-normalized":
        values = np.exp(-n / num_frames)
    elif kind == "constant":
        if not (value > 0.0):
            raise ConfigError(f"constant kappa must be positive, got {value}")
        values = np.full(num_frames, value, dtype=np.float64)
    else:
        raise ConfigError(f"unknown kappa kind {kind!r}; expected one of {KAPPA_KINDS}")
    return KappaSchedule(values)


def apply_dynamic_noise(
    eps_hat: np.ndarray, kappa: KappaSchedule, rng: np.random.Generator
) -> np.ndarray:
    """Blend predicted noise with a fresh draw, frame by frame:

        eps[n] <- (k / sqrt(1 + k^2)) eps[n] + N(0, 1/(1 + k^2) I),  k = kappa_n

    The blend preserves unit variance for unit-variance input.  Frames with
    k = +inf pass through unchanged.
    """
    if eps_hat.ndim != 4:
        raise ShapeError(f"eps_hat must be 4-d (frames, c, h, w), got {eps_hat.shape}")
    if eps_hat.shape[0] != len(kappa):
        raise ShapeError(f"kappa has {len(kappa)} frames, eps_hat has {eps_hat.shape[0]}")
    out = np.empty_like(eps_hat)
    for n, k in enumerate(kappa.values):
        if math.isinf(k):
            out[n] = eps_hat[n]
            continue
        keep = k / math.sqrt(1.0 + k * k)
        fresh_std = math.sqrt(1.0 / (1.0 + k * k))
        fresh = rng.standard_normal(eps_hat.shape[1:], dtype=np.float32)
        out[n] = keep * eps_hat[n] + fresh_std * fresh
    return out


class DenoisedTrace:
    """Per-step record of a clip's denoised last frame, keyed by the inference
    timestep value so sub-sampled schedules align between sampling and the next
    clip's inversion."""

    def __init__(self, entries: dict[int, np.ndarray] | None = None):
        self._entries: dict[int, np.ndarray] = dict(entries) if entries else {}

    def __setitem__(self, t: int, frame: np.ndarray) -> None:
        if frame.ndim != 3:
            raise ShapeError(f"trace entries are single frames (c, h, w), got {frame.shape}")
        self._entries[int(t)] = frame

    def __getitem__(self, t: int) -> np.ndarray:
        try:
            return self._entries[int(t)]
        except KeyError:
            raise TraceMissingError(f"no trace entry at timestep {t}") from None

    def __contains__(self, t: int) -> bool:
        return int(t) in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def timesteps(self) -> list[int]:
        return sorted(self._entries)


@dataclass(frozen=True)
class GuidanceConfig:
    """Guidance weights and knobs shared by inversion and sampling.

    With mean reduction over the M elements of a frame, one guidance step
    contracts its residual by (1 - 2 delta / M); delta below M keeps the update
    stable.  `affected_frames_lfai` extends the last-frame pull to the first K
    frames of the new clip.
    """

    delta_lfai: float = 1000.0
    delta_sgs: float = 7.0
    reduction: str = "mean"
    affected_frames_lfai: int = 1
    rng_seed: int = 0
    dynamic_noise: bool = True
    kappa_kind: str = "exp"
    kappa_value: float = 1.0
    sgs_symmetric: bool = False

    def __post_init__(self):
        for name in ("delta_lfai", "delta_sgs"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")
        if self.reduction not in REDUCTIONS:
            raise ConfigError(f"reduction must be one of {REDUCTIONS}, got {self.reduction!r}")
        if self.affected_frames_lfai < 1:
            raise ConfigError(f"affected_frames_lfai must be >= 1, got {self.affected_frames_lfai}")
        if self.kappa_kind not in KAPPA_KINDS:
            raise ConfigError(f"kappa_kind must be one of {KAPPA_KINDS}, got {self.kappa_kind!r}")

    def grad_scale(self, num_elements: int) -> float:
        """Coefficient of the residual in d/dx of reduction(||residual||^2)."""
        return 2.0 / num_elements if self.reduction == "mean" else 2.0


def repeat_last_frame(prev_clip: np.ndarray, num_frames: int) -> np.ndarray:
    """Stack num_frames copies of the previous clip's final frame."""
    if prev_clip.ndim != 4 or prev_clip.shape[0] < 1:
        raise ShapeError(f"prev_clip must be (frames, c, h, w) with >= 1 frame, got {prev_clip.shape}")
    if num_frames < 1:
        raise ConfigError(f"num_frames must be >= 1, got {num_frames}")
    return np.repeat(prev_clip[-1][None], num_frames, axis=0).astype(np.float32)


def lfai_loss(x_hat: DenoisedObservation, anchor: np.ndarray, cfg: GuidanceConfig) -> float:
    """reduction(||anchor - x_hat[n]||^2) summed over the affected frames."""
    k = min(cfg.affected_frames_lfai, x_hat.value.shape[0])
    sq = (x_hat.value[:k] - anchor[None]) ** 2
    per_frame = sq.reshape(k, -1).astype(np.float64).sum(axis=1)
    if cfg.reduction == "mean":
        per_frame /= anchor.size
    return float(per_frame.sum())


def lfai_guidance(
    x_hat: DenoisedObservation,
    anchor: np.ndarray,
    cfg: GuidanceConfig,
    grad_at: DenoisedObservation | None = None,
) -> DenoisedObservation:
    """One gradient-descent step pulling the first affected frames toward the
    previous clip's denoised last frame:

        x_hat[n] <- x_hat[n] - delta * d/dx reduction(||anchor - x_hat[n]||^2)

    `grad_at` evaluates the residual on a different observation of the same
    shape while the update lands on `x_hat`; inversion passes the estimate
    built from the unblended prediction so the pull acts on content rather
    than on the fresh noise the blend injects at deep levels.
    """
    if anchor.shape != x_hat.value.shape[1:]:
        raise ShapeError(f"anchor shape {anchor.shape} != frame shape {x_hat.value.shape[1:]}")
    if cfg.affected_frames_lfai > x_hat.value.shape[0]:
        raise ConfigError(
            f"affected_frames_lfai={cfg.affected_frames_lfai} exceeds clip frames {x_hat.value.shape[0]}"
        )
    if cfg.delta_lfai == 0.0:
        return x_hat
    source = x_hat if grad_at is None else grad_at
    if source.value.shape != x_hat.value.shape:
        raise ShapeError(
            f"grad_at shape {source.value.shape} != x_hat shape {x_hat.value.shape}"
        )
    value = x_hat.value.copy()
    step = cfg.delta_lfai * cfg.grad_scale(anchor.size)
    for n in range(cfg.affected_frames_lfai):
        value[n] -= step * (source.value[n] - anchor)
    return DenoisedObservation(value.astype(np.float32), x_hat.t)


def initialize_latent(
    prev_clip: np.ndarray,
    prev_trace: DenoisedTrace,
    predictor: NoisePredictor,
    cond: Condition,
    sched: DiffusionSchedule,
    cfg: GuidanceConfig,
    num_frames: int | None = None,
    rng: np.random.Generator | None = None,
    recorder=None,
) -> np.ndarray:
    """Build the next clip's starting latent by guided inversion of the previous
    clip's repeated last frame.  Returns x_T at the top inference timestep.
    """
    num_frames = prev_clip.shape[0] if num_frames is None else num_frames
    x = repeat_last_frame(prev_clip, num_frames)
    for t in sched.timesteps:
        t = int(t)
        if t not in prev_trace:
            raise TraceMissingError(f"prev_trace is missing inference timestep {t}")
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    kappa = kappa_schedule(num_frames, cfg.kappa_kind, cfg.kappa_value)

    for i, t in enumerate(sched.timesteps):
        t = int(t)
        eps_raw = predictor.predict(x, t, cond)
        eps_hat = apply_dynamic_noise(eps_raw, kappa, rng) if cfg.dynamic_noise else eps_raw
        abar_cur = sched.alpha_bar_prev(t)  # level the latent currently sits at
        x_hat = DenoisedObservation(
            ((x - (1.0 - abar_cur) ** 0.5 * eps_hat) / abar_cur**0.5).astype(np.float32), t
        )
        if eps_hat is eps_raw:
            x_hat_raw = x_hat
        else:
            # The blend-free estimate stays on the predictor's content scale at
            # every level; the anchor pull reads from it so deep-level noise in
            # x_hat does not enter the guidance residual.
            x_hat_raw = DenoisedObservation(
                ((x - (1.0 - abar_cur) ** 0.5 * eps_raw) / abar_cur**0.5).astype(np.float32), t
            )
        if recorder is not None:
            recorder.record(
                phase="invert",
                step_index=i,
                t=t,
                lfai_loss=lfai_loss(x_hat_raw, prev_trace[t], cfg),
            )
        x_hat = lfai_guidance(x_hat, prev_trace[t], cfg, grad_at=x_hat_raw)
        abar_t = sched.alpha_bar(t)
        x = (abar_t**0.5 * x_hat.value + (1.0 - abar_t) ** 0.5 * eps_hat).astype(np.float32)
    return x
