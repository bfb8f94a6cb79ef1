"""TCP serve loop pairing one engine connection with one backend.

Strictly request/response with a single request in flight; the model holds
one accelerator, so pipelining or parallel engine connections would buy
nothing.  The server keeps no state between requests beyond the loaded
weights: identical requests get identical replies whenever the backend is
deterministic.

Error handling is two-tier.  If a request is well-framed but unserviceable
(unknown op, bad dims for the op, backend failure such as OOM) the server
answers an error frame and keeps the connection.  If the framing itself is
broken (unparseable header, payload length disagreeing with dims) it answers
an error frame and then drops the connection, because the stream position
can no longer be trusted.
"""

from __future__ import annotations

import logging
import socket
import threading

import numpy as np

from .backends import Backend, BackendError
from .protocol import MalformedPayload, ProtocolViolation, encode_message, read_message

log = logging.getLogger("mevg_bridge.server")


class BridgeServer:
    """Serves one backend on a listening TCP socket, one connection at a time."""

    def __init__(self, backend: Backend, host: str = "127.0.0.1", port: int = 0):
        self.backend = backend
        self._sock = socket.create_server((host, port))
        self._sock.settimeout(0.2)
        self.address: tuple[str, int] = self._sock.getsockname()[:2]
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    # -- lifecycle ---------------------------------------------------------

    def serve_forever(self) -> None:
        log.info("listening on %s:%d (backend %s)", *self.address, self.backend.name)
        try:
            while not self._stop.is_set():
                try:
                    conn, peer = self._sock.accept()
                except socket.timeout:
                    continue
                except OSError:
                    break
                log.info("engine connected from %s:%d", *peer[:2])
                with conn:
                    self._serve_connection(conn)
                log.info("engine disconnected")
        finally:
            self._sock.close()

    def start(self) -> "BridgeServer":
        """Serve on a daemon thread; used by tests and embedded setups."""
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None

    def __enter__(self) -> "BridgeServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- one connection ----------------------------------------------------

    def _serve_connection(self, conn: socket.socket) -> None:
        conn.settimeout(None)
        rfile = conn.makefile("rb")
        try:
            while not self._stop.is_set():
                try:
                    msg = read_message(rfile)
                except ProtocolViolation as exc:
                    # includes MalformedPayload: stream position is lost
                    self._send_error(conn, "error", None, str(exc))
                    return
                if msg is None:
                    return
                header, payload = msg
                op = header.get("op")
                rid = header.get("request_id")
                try:
                    reply, reply_payload, close = self._dispatch(op, header, payload)
                except MalformedPayload as exc:
                    self._send_error(conn, op, rid, str(exc))
                    return
                except (ProtocolViolation, BackendError) as exc:
                    self._send_error(conn, op, rid, str(exc))
                    continue
                except Exception as exc:
                    log.exception("backend failed on op %r", op)
                    self._send_error(conn, op, rid, f"internal error: {exc}")
                    continue
                reply.update({"op": op, "request_id": rid, "status": "ok"})
                try:
                    conn.sendall(encode_message(reply, reply_payload))
                except OSError:
                    return
                if close:
                    return
        finally:
            rfile.close()

    def _send_error(self, conn: socket.socket, op, rid, message: str) -> None:
        frame = {"op": op or "error", "request_id": rid, "status": "error", "error": message}
        try:
            conn.sendall(encode_message(frame))
        except OSError:
            pass

    # -- dispatch ----------------------------------------------------------

    def _dispatch(self, op, header: dict, payload):
        if op == "hello":
            return {"capabilities": self.backend.capabilities()}, None, False
        if op == "bye":
            return {}, None, True
        if op == "predict":
            x = self._need_payload(op, payload, 4)
            t = header.get("t")
            if not isinstance(t, int) or isinstance(t, bool):
                raise ProtocolViolation(f"predict needs an integer t, got {t!r}")
            return {}, self.backend.predict(x, t, self._need_prompt(op, header)), False
        if op == "encode_image":
            return {}, self.backend.encode_image(self._need_payload(op, payload, 3)), False
        if op == "decode":
            return {}, self.backend.decode(self._need_payload(op, payload, 4)), False
        if op == "clip_text":
            frames = self._need_payload(op, payload, 4)
            score = self.backend.clip_text(frames, self._need_prompt(op, header))
            return {"score": score}, None, False
        if op == "clip_image":
            score = self.backend.clip_image(self._need_payload(op, payload, 4))
            return {"score": score}, None, False
        raise ProtocolViolation(f"unknown op {op!r}")

    @staticmethod
    def _need_payload(op, payload, ndim: int) -> np.ndarray:
        if payload is None:
            raise ProtocolViolation(f"{op} needs a payload")
        if payload.ndim != ndim:
            raise ProtocolViolation(f"{op} needs a {ndim}-d payload, got dims {payload.shape}")
        return payload

    @staticmethod
    def _need_prompt(op, header: dict) -> str:
        prompt = header.get("prompt")
        if not isinstance(prompt, str) or not prompt:
            raise ProtocolViolation(f"{op} needs a nonempty prompt string")
        return prompt
