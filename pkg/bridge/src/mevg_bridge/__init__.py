"""Model bridge: serves a video diffusion model to the mevg engine over TCP."""

from .backends import Backend, BackendError, ToyGaussianBackend, WeightsBackend
from .metrics import cosine_similarity, mean_consecutive_similarity, text_alignment_score
from .protocol import (
    DTYPE,
    MalformedPayload,
    ProtocolViolation,
    decode_message,
    encode_message,
    read_message,
    write_message,
)
from .server import BridgeServer

__version__ = "0.1.0"

__all__ = [
    "Backend",
    "BackendError",
    "BridgeServer",
    "DTYPE",
    "MalformedPayload",
    "ProtocolViolation",
    "ToyGaussianBackend",
    "WeightsBackend",
    "cosine_similarity",
    "decode_message",
    "encode_message",
    "mean_consecutive_similarity",
    "read_message",
    "text_alignment_score",
    "write_message",
    "__version__",
]
