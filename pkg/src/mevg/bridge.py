"""Client predictor that drives a model served over TCP.

The wire format is one JSON header line (newline-terminated), an 8-byte
little-endian unsigned payload length, then the payload as raw little-endian
float32 bytes in C order.  This module implements its own reader and writer
for those bytes rather than importing the server package, so the two ends
only agree through the format itself; an incompatibility shows up as an
interop failure instead of a shared bug.

Calls are strictly one request, one reply, on a single connection.  Replies
that time out raise `BridgeTimeoutError`; malformed or mismatched replies and
server-side error frames raise `BridgeProtocolError`.
"""

from __future__ import annotations

import itertools
import json
import socket
import struct
from pathlib import Path

import numpy as np

from .errors import BridgeProtocolError, BridgeTimeoutError, ShapeError
from .predictors import Condition, NoisePredictor

_DTYPE = "f32le"
_MAX_HEADER = 1 << 20
_MAX_PAYLOAD = 1 << 31
_LENGTH = struct.Struct("<Q")


def encode_frame(header: dict, payload: np.ndarray | None = None) -> bytes:
    """Serialize one message; dims and dtype are taken from the payload."""
    head = dict(header)
    if payload is not None:
        if np.asarray(payload).ndim == 0:
            raise BridgeProtocolError("payload must have at least one dimension")
        payload = np.ascontiguousarray(payload, dtype="<f4")
        head["dims"] = list(payload.shape)
        head["dtype"] = _DTYPE
        body = payload.tobytes()
        if len(body) > _MAX_PAYLOAD:
            raise BridgeProtocolError(f"payload of {len(body)} bytes exceeds the cap")
    else:
        body = b""
    line = json.dumps(head, separators=(",", ":"), sort_keys=True).encode("utf-8")
    return line + b"\n" + _LENGTH.pack(len(body)) + body


def _payload_from(header: dict, body: bytes) -> np.ndarray | None:
    if not body:
        return None
    if header.get("dtype") != _DTYPE:
        raise BridgeProtocolError(f"payload present but dtype is {header.get('dtype')!r}")
    dims = header.get("dims")
    if not isinstance(dims, list) or not dims or any(
        not isinstance(d, int) or isinstance(d, bool) or d < 1 for d in dims
    ):
        raise BridgeProtocolError(f"bad dims in header: {dims!r}")
    expected = 4 * int(np.prod(dims, dtype=np.int64))
    if len(body) != expected:
        raise BridgeProtocolError(f"payload is {len(body)} bytes, dims {dims} need {expected}")
    return np.frombuffer(body, dtype="<f4").reshape(dims).copy()


def parse_frame(data: bytes, offset: int = 0) -> tuple[dict, np.ndarray | None, int]:
    """Parse one message from bytes; returns (header, payload, next offset)."""
    end = data.find(b"\n", offset, offset + _MAX_HEADER + 1)
    if end < 0:
        raise BridgeProtocolError("missing header line terminator")
    try:
        header = json.loads(data[offset:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BridgeProtocolError(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise BridgeProtocolError("header must be a JSON object")
    start = end + 1
    if len(data) < start + _LENGTH.size:
        raise BridgeProtocolError("truncated length prefix")
    (length,) = _LENGTH.unpack_from(data, start)
    if length > _MAX_PAYLOAD:
        raise BridgeProtocolError(f"length prefix {length} exceeds the cap")
    start += _LENGTH.size
    if len(data) < start + length:
        raise BridgeProtocolError("truncated payload")
    return header, _payload_from(header, data[start:start + length]), start + length


class BridgePredictor(NoisePredictor):
    """NoisePredictor backed by a bridge server; dims come from the handshake."""

    def __init__(self, sock: socket.socket, capabilities: dict, timeout: float):
        shape = capabilities.get("frame_shape")
        if not isinstance(shape, list) or len(shape) != 3 or any(
            not isinstance(d, int) or d < 1 for d in shape
        ):
            raise BridgeProtocolError(f"server reported bad frame_shape: {shape!r}")
        self._sock = sock
        self._timeout = timeout
        self._ids = itertools.count(1)
        self.capabilities = capabilities
        self.frame_shape = tuple(shape)
        self.frames = int(capabilities.get("frames", 0)) or None

    @classmethod
    def connect(cls, addr: str, timeout: float = 600.0, connect_timeout: float = 30.0) -> "BridgePredictor":
        """Open host:port, run the hello handshake, and return a ready predictor."""
        host, sep, port = addr.rpartition(":")
        if not sep or not port.isdigit():
            raise ValueError(f"bridge address must be host:port, got {addr!r}")
        sock = socket.create_connection((host or "127.0.0.1", int(port)), timeout=connect_timeout)
        try:
            sock.settimeout(timeout)
            probe = cls.__new__(cls)
            probe._sock, probe._timeout, probe._ids = sock, timeout, itertools.count(1)
            reply, _ = probe._roundtrip("hello")
            caps = reply.get("capabilities")
            if not isinstance(caps, dict):
                raise BridgeProtocolError(f"hello reply lacks capabilities: {reply}")
            return cls(sock, caps, timeout)
        except BaseException:
            sock.close()
            raise

    # -- transport ---------------------------------------------------------

    def _recv_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self._sock.recv(min(1 << 16, n - len(buf)))
            except socket.timeout as exc:
                raise BridgeTimeoutError(f"no reply within {self._timeout} s") from exc
            if not chunk:
                raise BridgeProtocolError("connection closed mid-message")
            buf += chunk
        return bytes(buf)

    def _recv_line(self) -> bytes:
        buf = bytearray()
        while True:
            try:
                byte = self._sock.recv(1)
            except socket.timeout as exc:
                raise BridgeTimeoutError(f"no reply within {self._timeout} s") from exc
            if not byte:
                raise BridgeProtocolError("connection closed by server")
            if byte == b"\n":
                return bytes(buf)
            buf += byte
            if len(buf) > _MAX_HEADER:
                raise BridgeProtocolError("reply header too long")

    def _roundtrip(self, op: str, payload: np.ndarray | None = None, **fields):
        if self._sock is None:
            raise BridgeProtocolError("connection is closed")
        rid = next(self._ids)
        header = {"op": op, "request_id": rid, "dims": None, "dtype": None,
                  "t": None, "prompt": None} | fields
        try:
            self._sock.sendall(encode_frame(header, payload))
        except socket.timeout as exc:
            raise BridgeTimeoutError(f"send stalled for {self._timeout} s") from exc
        except OSError as exc:
            raise BridgeProtocolError(f"send failed: {exc}") from exc
        line = self._recv_line()
        try:
            reply = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BridgeProtocolError(f"reply header is not valid JSON: {exc}") from exc
        if not isinstance(reply, dict):
            raise BridgeProtocolError("reply header must be a JSON object")
        (length,) = _LENGTH.unpack(self._recv_exact(_LENGTH.size))
        if length > _MAX_PAYLOAD:
            raise BridgeProtocolError(f"reply length prefix {length} exceeds the cap")
        body = self._recv_exact(length) if length else b""
        if reply.get("request_id") != rid:
            raise BridgeProtocolError(
                f"reply id {reply.get('request_id')!r} does not match request id {rid}"
            )
        if reply.get("status") != "ok":
            raise BridgeProtocolError(f"server error: {reply.get('error', 'unknown')}")
        return reply, _payload_from(reply, body)

    def _expect_payload(self, op: str, reply: dict, payload, shape: tuple) -> np.ndarray:
        if payload is None:
            raise BridgeProtocolError(f"{op} reply carried no payload")
        if payload.shape != shape:
            raise BridgeProtocolError(
                f"{op} reply dims {list(payload.shape)} do not match expected {list(shape)}"
            )
        return np.ascontiguousarray(payload, dtype=np.float32)

    # -- ops ---------------------------------------------------------------

    def predict(self, x_t: np.ndarray, t: int, cond: Condition) -> np.ndarray:
        if x_t.ndim != 4 or x_t.shape[1:] != self.frame_shape:
            raise ShapeError(f"x_t shape {x_t.shape} does not match frame shape {self.frame_shape}")
        prompt = cond.payload.decode("utf-8") if cond.payload else cond.id
        reply, payload = self._roundtrip("predict", x_t, t=int(t), prompt=prompt)
        return self._expect_payload("predict", reply, payload, x_t.shape)

    def encode_image(self, image: np.ndarray) -> np.ndarray:
        if image.ndim != 3:
            raise ShapeError(f"image must be (3, H, W), got {image.shape}")
        reply, payload = self._roundtrip("encode_image", image)
        return self._expect_payload("encode_image", reply, payload, self.frame_shape)

    def decode(self, latent: np.ndarray) -> np.ndarray:
        if latent.ndim != 4 or latent.shape[1:] != self.frame_shape:
            raise ShapeError(f"latents {latent.shape} do not match frame shape {self.frame_shape}")
        reply, payload = self._roundtrip("decode", latent)
        if payload is None or payload.ndim != 4 or payload.shape[0] != latent.shape[0]:
            got = None if payload is None else list(payload.shape)
            raise BridgeProtocolError(f"decode reply dims {got} do not cover {latent.shape[0]} frames")
        return np.ascontiguousarray(payload, dtype=np.float32)

    def clip_text(self, frames: np.ndarray, prompt: str) -> float:
        reply, _ = self._roundtrip("clip_text", np.asarray(frames), prompt=prompt)
        return self._score(reply, "clip_text")

    def clip_image(self, frames: np.ndarray) -> float:
        reply, _ = self._roundtrip("clip_image", np.asarray(frames))
        return self._score(reply, "clip_image")

    @staticmethod
    def _score(reply: dict, op: str) -> float:
        score = reply.get("score")
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise BridgeProtocolError(f"{op} reply lacks a numeric score: {reply}")
        return float(score)

    def decode_clips(self, clips, out_dir) -> list[Path]:
        """Decode each clip and write one PNG per frame into out_dir."""
        import matplotlib

        matplotlib.use("Agg")
        from matplotlib.image import imsave

        out_dir = Path(out_dir)
        written = []
        for ci, clip in enumerate(clips):
            frames = self.decode(np.asarray(clip, dtype=np.float32))
            for fi, frame in enumerate(frames):
                path = out_dir / f"clip_{ci:03d}_frame_{fi:03d}.png"
                imsave(path, np.clip(frame.transpose(1, 2, 0), 0.0, 1.0))
                written.append(path)
        return written

    # -- lifecycle ---------------------------------------------------------

    def close(self) -> None:
        sock, self._sock = self._sock, None
        if sock is None:
            return
        try:
            sock.settimeout(1.0)
            sock.sendall(encode_frame({"op": "bye", "request_id": next(self._ids),
                                       "dims": None, "dtype": None, "t": None, "prompt": None}))
        except OSError:
            pass
        finally:
            sock.close()

    def __enter__(self) -> "BridgePredictor":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
