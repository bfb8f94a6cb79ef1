"""Noise predictor contract and the analytic Gaussian reference predictor.

The engine only ever sees `NoisePredictor`; real models attach through the
bridge client while desk-scale runs use `AnalyticGaussianPredictor`, whose
posterior-mean output is exact and lets every sampling property be checked
numerically.
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UnknownConditionError
from .schedule import DiffusionSchedule


@dataclass(frozen=True)
class Condition:
    """Opaque conditioning handle passed through to the predictor.

    `payload` carries predictor-specific bytes (prompt text for the bridge,
    unused by the analytic predictor, which resolves `id` in its registry).
    """

    id: str
    payload: bytes = b""

    def __post_init__(self):
        if not self.id:
            raise ValueError("Condition.id must be nonempty")


class NoisePredictor(ABC):
    """Abstract noise predictor epsilon(x_t, t, cond).

    Implementations must be pure per call: same (x_t, t, cond) -> same output,
    with shape equal to x_t and finite values.
    """

    #: shape (c, h, w) of a single frame latent
    frame_shape: tuple[int, int, int]

    @abstractmethod
    def predict(self, x_t: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        """Predicted noise for latents x_t (frames, c, h, w) at training step t."""


class AnalyticGaussianPredictor(NoisePredictor):
    """Exact posterior-mean noise predictor for Gaussian frame priors.

    Each condition id is registered with a mean mu (one frame latent); frames
    are modelled i.i.d. as x0 ~ N(mu, prior_var * I).  Under forward corruption
    x_t = sqrt(abar) x0 + sqrt(1-abar) eps the optimal prediction is

        E[x0 | x_t] = mu + (sqrt(abar) s2 / (abar s2 + 1 - abar)) (x_t - sqrt(abar) mu)
        eps_hat     = (x_t - sqrt(abar) E[x0 | x_t]) / sqrt(1 - abar)

    which collapses to eps_hat = sqrt(1-abar) (x_t - sqrt(abar) mu) for s2 = 1.
    """

    def __init__(self, sched: DiffusionSchedule, means: dict[str, np.ndarray], prior_var: float = 1.0):
        if not means:
            raise ValueError("means registry must be nonempty")
        if prior_var <= 0.0:
            raise ValueError(f"prior_var must be positive, got {prior_var}")
        shapes = {m.shape for m in means.values()}
        if len(shapes) != 1:
            raise ShapeError(f"all registered means must share one frame shape, got {shapes}")
        (shape,) = shapes
        if len(shape) != 3:
            raise ShapeError(f"mean frame shape must be (c, h, w), got {shape}")
        self.sched = sched
        self.means = {k: np.asarray(v, dtype=np.float64) for k, v in means.items()}
        self.prior_var = float(prior_var)
        self.frame_shape = shape

    def mean_for(self, cond: Condition) -> np.ndarray:
        try:
            return self.means[cond.id]
        except KeyError:
            raise UnknownConditionError(cond.id) from None

    def predict(self, x_t: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        mu = self.mean_for(cond)
        if x_t.ndim != 4 or x_t.shape[1:] != self.frame_shape:
            raise ShapeError(f"x_t shape {x_t.shape} does not match frame shape {self.frame_shape}")
        abar = self.sched.alpha_bar(t)
        s2 = self.prior_var
        root_abar = abar**0.5
        gain = root_abar * s2 / (abar * s2 + 1.0 - abar)
        x0_mean = mu[None] + gain * (x_t - root_abar * mu[None])
        eps_hat = (x_t - root_abar * x0_mean) / (1.0 - abar) ** 0.5
        return eps_hat.astype(np.float32)


class ZeroPredictor(NoisePredictor):
    """Predicts zero noise everywhere; DDIM then reduces to pure rescaling."""

    def __init__(self, frame_shape: tuple[int, int, int]):
        self.frame_shape = tuple(frame_shape)

    def predict(self, x_t: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        if x_t.ndim != 4 or x_t.shape[1:] != self.frame_shape:
            raise ShapeError(f"x_t shape {x_t.shape} does not match frame shape {self.frame_shape}")
        return np.zeros_like(x_t, dtype=np.float32)


def means_from_conditions(
    conds: list[Condition],
    frame_shape: tuple[int, int, int],
    seed: int = 0,
    spread: float = 1.0,
) -> dict[str, np.ndarray]:
    """Deterministic per-condition means derived from condition ids.

    Hashing the id (not Python's randomized hash) keeps analytic runs
    reproducible across processes; `spread` scales how far apart the means sit.
    """
    means = {}
    for cond in conds:
        digest = hashlib.sha256(f"{seed}:{cond.id}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        means[cond.id] = spread * rng.standard_normal(frame_shape)
    return means
