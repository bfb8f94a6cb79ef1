"""Multi-event video generation over an abstract diffusion noise predictor."""

__version__ = "0.1.0"

from .bridge import BridgePredictor
from .ddim import (
    DenoisedObservation,
    ddim_invert,
    ddim_invert_step,
    ddim_recompose,
    ddim_sample_step,
    denoised_observation,
)
from .driver import (
    GenerationRecord,
    Scenario,
    generate_from_image,
    generate_multi_event,
    iter_multi_event,
)
from .errors import (
    BridgeProtocolError,
    BridgeTimeoutError,
    ConfigError,
    LatentIOError,
    MevgError,
    PromptError,
    ScheduleBoundaryError,
    ShapeError,
    TraceMissingError,
    UnknownConditionError,
)
from .guided_sampler import SamplingResult, sample_clip, sgs_guidance, sgs_loss
from .latent_init import (
    DenoisedTrace,
    GuidanceConfig,
    KappaSchedule,
    apply_dynamic_noise,
    initialize_latent,
    kappa_schedule,
    lfai_guidance,
    lfai_loss,
    repeat_last_frame,
)
from .latent_io import load_latent, save_latent
from .predictors import (
    AnalyticGaussianPredictor,
    Condition,
    NoisePredictor,
    ZeroPredictor,
    means_from_conditions,
)
from .prompt_gen import (
    LlmClientConfig,
    LlmPromptClient,
    PromptRequest,
    split_scenario,
    split_story,
)
from .schedule import DiffusionSchedule, build_schedule, forward_diffuse

__all__ = [
    "__version__",
    "AnalyticGaussianPredictor",
    "BridgePredictor",
    "BridgeProtocolError",
    "BridgeTimeoutError",
    "Condition",
    "ConfigError",
    "DenoisedObservation",
    "DenoisedTrace",
    "DiffusionSchedule",
    "GenerationRecord",
    "GuidanceConfig",
    "KappaSchedule",
    "LatentIOError",
    "LlmClientConfig",
    "LlmPromptClient",
    "MevgError",
    "NoisePredictor",
    "PromptError",
    "PromptRequest",
    "SamplingResult",
    "Scenario",
    "ScheduleBoundaryError",
    "ShapeError",
    "TraceMissingError",
    "UnknownConditionError",
    "ZeroPredictor",
    "apply_dynamic_noise",
    "build_schedule",
    "ddim_invert",
    "ddim_invert_step",
    "ddim_recompose",
    "ddim_sample_step",
    "denoised_observation",
    "forward_diffuse",
    "generate_from_image",
    "generate_multi_event",
    "initialize_latent",
    "iter_multi_event",
    "kappa_schedule",
    "lfai_guidance",
    "lfai_loss",
    "load_latent",
    "means_from_conditions",
    "repeat_last_frame",
    "sample_clip",
    "save_latent",
    "sgs_guidance",
    "sgs_loss",
    "split_scenario",
    "split_story",
]
