"""Exception types shared across the engine."""


class MevgError(Exception):
    """Base class for engine errors."""


class ConfigError(MevgError, ValueError):
    """Invalid configuration value or scenario file."""


class ShapeError(MevgError, ValueError):
    """Latent / frame shape mismatch."""


class ScheduleBoundaryError(MevgError, IndexError):
    """Step requested past the end of the inference timestep sequence."""


class UnknownConditionError(MevgError, KeyError):
    """Condition id not registered with the predictor."""


class TraceMissingError(MevgError, KeyError):
    """Anchor trace has no entry for the requested timestep."""


class LatentIOError(MevgError, OSError):
    """Latent file is unreadable, truncated, or carries a foreign format."""


class PromptError(MevgError, ValueError):
    """Prompt generation failed (bad count, malformed reply, unreachable service)."""


class BridgeProtocolError(MevgError, RuntimeError):
    """Wire-protocol violation while talking to a model bridge."""


class BridgeTimeoutError(MevgError, TimeoutError):
    """Model bridge did not answer within the configured timeout."""
