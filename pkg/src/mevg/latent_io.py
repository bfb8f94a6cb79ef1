"""Binary clip-latent files.

Layout: 4-byte magic "MEVG", one format-version byte, four little-endian u32
dimensions (frames, channels, height, width), then frames*c*h*w little-endian
float32 values in row-major order.  Writes go through a sibling temp file and
an atomic rename, so readers never observe a partially written file.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import LatentIOError, ShapeError

MAGIC = b"MEVG"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sB4I")


def save_latent(path: str | os.PathLike, clip: np.ndarray) -> None:
    """Write a (frames, c, h, w) float array atomically."""
    clip = np.asarray(clip)
    if clip.ndim != 4:
        raise ShapeError(f"clip must be 4-d (frames, c, h, w), got {clip.shape}")
    path = Path(path)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, *clip.shape)
    payload = np.ascontiguousarray(clip, dtype="<f4").tobytes()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def load_latent(path: str | os.PathLike) -> np.ndarray:
    """Read a clip latent back as float32, validating the full layout."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise LatentIOError(f"cannot read {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise LatentIOError(f"{path} is shorter than a latent header")
    magic, version, f, c, h, w = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise LatentIOError(f"{path} is not a latent file (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise LatentIOError(f"{path} has format version {version}, this reader expects {FORMAT_VERSION}")
    expected = _HEADER.size + 4 * f * c * h * w
    if len(raw) != expected:
        raise LatentIOError(f"{path} holds {len(raw)} bytes, layout requires {expected}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    return data.reshape(f, c, h, w).astype(np.float32, copy=True)
