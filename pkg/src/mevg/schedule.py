"""Forward diffusion schedule: betas, cumulative alpha products, inference timesteps.

Conventions:
    alpha_bars[t] = prod_{i=0..t} (1 - betas[i])   (inclusive of t)
    x_t = sqrt(alpha_bars[t]) * x0 + sqrt(1 - alpha_bars[t]) * noise
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ScheduleBoundaryError, ShapeError

SCHEDULE_KINDS = ("linear", "scaled_linear")


@dataclass(frozen=True)
class DiffusionSchedule:
    """Immutable noise schedule plus the inference timestep subsequence.

    Coefficient arrays are kept in float64 (cumulative products degrade fast in
    float32); per-step scalars are narrowed when they meet float32 latents.
    `timesteps` is ascending and shared by inversion and sampling so both walk
    the identical subsequence.
    """

    num_train_steps: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    eta: float = 0.0
    timesteps: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.timesteps is None:
            object.__setattr__(self, "timesteps", np.arange(self.num_train_steps))
        for name in ("betas", "alphas", "alpha_bars"):
            arr = getattr(self, name)
            if arr.shape != (self.num_train_steps,):
                raise ConfigError(f"{name} must have shape ({self.num_train_steps},), got {arr.shape}")
        if np.any(self.betas <= 0.0) or np.any(self.betas >= 1.0):
            raise ConfigError("betas must lie strictly inside (0, 1)")
        if np.any(self.alpha_bars <= 0.0) or np.any(self.alpha_bars > 1.0):
            raise ConfigError("alpha_bars must lie in (0, 1]")
        if np.any(np.diff(self.alpha_bars) >= 0.0):
            raise ConfigError("alpha_bars must be strictly decreasing")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must lie in [0, 1], got {self.eta}")
        ts = self.timesteps
        if ts.ndim != 1 or len(ts) == 0:
            raise ConfigError("timesteps must be a nonempty 1-d sequence")
        if np.any(np.diff(ts) <= 0):
            raise ConfigError("timesteps must be strictly ascending")
        if ts[0] < 0 or ts[-1] >= self.num_train_steps:
            raise ConfigError("timesteps must lie inside [0, num_train_steps)")

    @property
    def num_inference_steps(self) -> int:
        return len(self.timesteps)

    def alpha_bar(self, t: int) -> float:
        if not 0 <= t < self.num_train_steps:
            raise ScheduleBoundaryError(f"timestep {t} outside [0, {self.num_train_steps})")
        return float(self.alpha_bars[t])

    def _position(self, t: int) -> int:
        pos = int(np.searchsorted(self.timesteps, t))
        if pos >= len(self.timesteps) or self.timesteps[pos] != t:
            raise ScheduleBoundaryError(f"timestep {t} is not in the inference sequence")
        return pos

    def prev_timestep(self, t: int) -> int | None:
        """Inference timestep before t, or None at the clean boundary."""
        pos = self._position(t)
        return int(self.timesteps[pos - 1]) if pos > 0 else None

    def next_timestep(self, t: int) -> int | None:
        """Inference timestep after t, or None at the top of the sequence."""
        pos = self._position(t)
        return int(self.timesteps[pos + 1]) if pos + 1 < len(self.timesteps) else None

    def alpha_bar_prev(self, t: int) -> float:
        """alpha_bar at the inference step before t; 1.0 at the clean boundary."""
        t_prev = self.prev_timestep(t)
        return 1.0 if t_prev is None else float(self.alpha_bars[t_prev])

    def sigma(self, t: int) -> float:
        """DDIM noise scale at step t:

        sigma_t = eta * sqrt((1 - abar_prev) / (1 - abar_t)) * sqrt(1 - abar_t / abar_prev)
        """
        if self.eta == 0.0:
            return 0.0
        abar_t = self.alpha_bar(t)
        abar_prev = self.alpha_bar_prev(t)
        return float(
            self.eta
            * np.sqrt((1.0 - abar_prev) / (1.0 - abar_t))
            * np.sqrt(1.0 - abar_t / abar_prev)
        )


def build_schedule(
    num_train_steps: int,
    beta_start: float = 1e-4,
    beta_end: float = 0.02,
    kind: str = "linear",
    eta: float = 0.0,
    num_inference_steps: int | None = None,
) -> DiffusionSchedule:
    """Construct a diffusion schedule.

    kind "linear" spaces betas evenly; "scaled_linear" spaces sqrt(beta) evenly
    (the convention used by latent diffusion checkpoints).  When
    num_inference_steps is given, a uniform-stride subsequence of timesteps is
    stored for DDIM sub-sampling.
    """
    if num_train_steps < 1:
        raise ConfigError(f"num_train_steps must be >= 1, got {num_train_steps}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ConfigError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    if kind == "linear":
        betas = np.linspace(beta_start, beta_end, num_train_steps, dtype=np.float64)
    elif kind == "scaled_linear":
        betas = np.linspace(beta_start**0.5, beta_end**0.5, num_train_steps, dtype=np.float64) ** 2
    else:
        raise ConfigError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)

    if num_inference_steps is None:
        timesteps = np.arange(num_train_steps)
    else:
        if not 1 <= num_inference_steps <= num_train_steps:
            raise ConfigError(
                f"num_inference_steps must lie in [1, {num_train_steps}], got {num_inference_steps}"
            )
        stride = num_train_steps // num_inference_steps
        timesteps = (np.arange(num_inference_steps) * stride).astype(np.int64)

    return DiffusionSchedule(
        num_train_steps=num_train_steps,
        betas=betas,
        alphas=alphas,
        alpha_bars=alpha_bars,
        eta=eta,
        timesteps=timesteps,
    )


def forward_diffuse(x0: np.ndarray, t: int, noise: np.ndarray, sched: DiffusionSchedule) -> np.ndarray:
    """Corrupt clean latents to noise level t:  sqrt(abar_t) x0 + sqrt(1 - abar_t) noise."""
    if x0.shape != noise.shape:
        raise ShapeError(f"x0 shape {x0.shape} != noise shape {noise.shape}")
    abar = sched.alpha_bar(t)
    return (abar**0.5 * x0 + (1.0 - abar) ** 0.5 * noise).astype(np.float32)
