"""Frame codec for the bridge wire protocol.

One message on the wire is

    header line:  a JSON object, UTF-8, terminated by a single b"\\n"
    length:       8-byte little-endian unsigned payload byte count
    payload:      raw little-endian float32 block, C order, or empty

Requests carry {op, request_id, dims, dtype, t, prompt}; replies echo op and
request_id and add {status, error, score, capabilities} as the op requires.
Whenever a payload is present the header must say dtype "f32le" and list dims
whose product times four equals the length prefix.  The engine ships its own
reader/writer for the same bytes; neither side imports the other, so any
drift between the two implementations shows up as an interop test failure
rather than a silently shared bug.
"""

from __future__ import annotations

import json
import struct
from typing import BinaryIO

import numpy as np

DTYPE = "f32le"
MAX_HEADER_BYTES = 1 << 20
MAX_PAYLOAD_BYTES = 1 << 31

_LENGTH = struct.Struct("<Q")


class ProtocolViolation(RuntimeError):
    """Header or framing that cannot be interpreted."""


class MalformedPayload(ProtocolViolation):
    """Length prefix disagrees with the declared dims, or is oversized.

    After answering with an error frame the connection is torn down, because
    the stream position can no longer be trusted.
    """


def _check_dims(dims) -> tuple[int, ...]:
    if not isinstance(dims, (list, tuple)) or not dims:
        raise ProtocolViolation(f"dims must be a nonempty list, got {dims!r}")
    out = []
    size = 1
    for d in dims:
        if not isinstance(d, int) or isinstance(d, bool) or d < 1:
            raise ProtocolViolation(f"dims entries must be positive integers, got {dims!r}")
        out.append(d)
        size *= d
    if 4 * size > MAX_PAYLOAD_BYTES:
        raise MalformedPayload(f"dims {dims!r} exceed the payload cap")
    return tuple(out)


def encode_message(header: dict, payload: np.ndarray | None = None) -> bytes:
    """Serialize one message; dims/dtype are filled in from the payload."""
    head = dict(header)
    if payload is not None:
        if np.asarray(payload).ndim == 0:
            raise ProtocolViolation("payload must have at least one dimension")
        payload = np.ascontiguousarray(payload, dtype="<f4")
        head["dims"] = list(payload.shape)
        head["dtype"] = DTYPE
        body = payload.tobytes()
        if len(body) > MAX_PAYLOAD_BYTES:
            raise MalformedPayload(f"payload of {len(body)} bytes exceeds the cap")
    else:
        body = b""
    line = json.dumps(head, separators=(",", ":"), sort_keys=True).encode("utf-8")
    if len(line) > MAX_HEADER_BYTES:
        raise ProtocolViolation("header too large")
    return line + b"\n" + _LENGTH.pack(len(body)) + body


def _finish(header, body: bytes) -> tuple[dict, np.ndarray | None]:
    """Validate the decoded pieces and reshape the payload."""
    if not isinstance(header, dict):
        raise ProtocolViolation(f"header must be a JSON object, got {type(header).__name__}")
    if not body:
        return header, None
    if header.get("dtype") != DTYPE:
        raise ProtocolViolation(f"payload present but dtype is {header.get('dtype')!r}")
    dims = _check_dims(header.get("dims"))
    expected = 4 * int(np.prod(dims, dtype=np.int64))
    if len(body) != expected:
        raise MalformedPayload(f"payload is {len(body)} bytes, dims {dims} need {expected}")
    payload = np.frombuffer(body, dtype="<f4").reshape(dims)
    return header, payload.copy()


def decode_message(data: bytes, offset: int = 0) -> tuple[dict, np.ndarray | None, int]:
    """Parse one message from a byte buffer; returns (header, payload, next offset)."""
    end = data.find(b"\n", offset, offset + MAX_HEADER_BYTES + 1)
    if end < 0:
        raise ProtocolViolation("missing header line terminator")
    try:
        header = json.loads(data[offset:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolViolation(f"header is not valid JSON: {exc}") from exc
    start = end + 1
    if len(data) < start + _LENGTH.size:
        raise ProtocolViolation("truncated length prefix")
    (length,) = _LENGTH.unpack_from(data, start)
    if length > MAX_PAYLOAD_BYTES:
        raise MalformedPayload(f"length prefix {length} exceeds the cap")
    start += _LENGTH.size
    if len(data) < start + length:
        raise ProtocolViolation("truncated payload")
    header, payload = _finish(header, data[start:start + length])
    return header, payload, start + length


def read_message(rfile: BinaryIO) -> tuple[dict, np.ndarray | None] | None:
    """Read one message from a blocking stream; None on clean end of stream."""
    line = rfile.readline(MAX_HEADER_BYTES + 1)
    if not line:
        return None
    if not line.endswith(b"\n"):
        if len(line) > MAX_HEADER_BYTES:
            raise ProtocolViolation("header too large")
        raise ProtocolViolation("stream ended inside a header line")
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolViolation(f"header is not valid JSON: {exc}") from exc
    prefix = rfile.read(_LENGTH.size)
    if len(prefix) != _LENGTH.size:
        raise ProtocolViolation("stream ended inside the length prefix")
    (length,) = _LENGTH.unpack(prefix)
    if length > MAX_PAYLOAD_BYTES:
        # Do not try to drain an absurd count; the caller resets the stream.
        raise MalformedPayload(f"length prefix {length} exceeds the cap")
    body = rfile.read(length) if length else b""
    if len(body) != length:
        raise ProtocolViolation("stream ended inside the payload")
    return _finish(header, body)


def write_message(wfile: BinaryIO, header: dict, payload: np.ndarray | None = None) -> None:
    wfile.write(encode_message(header, payload))
    wfile.flush()
