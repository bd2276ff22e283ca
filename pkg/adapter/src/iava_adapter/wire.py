"""Line-delimited JSON server speaking the engine's session protocol.

Each accepted connection is one session over the next dataset example,
in order, so a client that opens connection k talks about example k.
The server sends ``hello{version, n_tokens, vocab_size}`` first, then
answers ``attention_req`` and ``step_req`` one at a time.  Requests it
cannot serve get an ``error`` reply with a reason string and the
session continues.  Connections are handled sequentially: a single
in-flight request, model inference serialized.
"""

from __future__ import annotations

import json
import logging
import math
import socket
import threading

from iava_adapter.model import (
    N_TOKENS,
    VOCAB,
    Example,
    HookConfig,
    Mask,
    Noise,
    TinyVLM,
)

logger = logging.getLogger(__name__)

WIRE_VERSION = 1

_JSON_SEPARATORS = (",", ":")


def encode_message(message: dict) -> bytes:
    """One wire message as a newline-terminated JSON line."""
    return (json.dumps(message, separators=_JSON_SEPARATORS) + "\n").encode("utf-8")


def decode_message(line: str | bytes) -> dict:
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ValueError(f"not valid UTF-8: {exc}") from exc
    try:
        message = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid JSON: {exc.msg}") from exc
    if not isinstance(message, dict):
        raise ValueError("message is not an object")
    return message


def parse_address(address: str) -> tuple[str, int]:
    host, sep, port_text = address.rpartition(":")
    if not sep or not host:
        raise ValueError(f"address must be host:port, not {address!r}")
    try:
        port = int(port_text)
    except ValueError:
        raise ValueError(f"invalid port in address {address!r}") from None
    if not 0 <= port <= 65535:
        raise ValueError(f"port {port} outside [0, 65535]")
    return host, port


def visual_from_fields(message: dict):
    """Decode a step request's visual fields into a model variant."""
    kind = message.get("visual")
    if kind in ("original", "none"):
        return kind
    if kind == "mask":
        keep = message.get("keep")
        if not isinstance(keep, list):
            raise ValueError("mask visual needs a keep list")
        return Mask(
            keep=tuple(int(j) for j in keep),
            policy=message.get("policy", "zero-fill"),
        )
    if kind == "noise":
        sigma = message.get("sigma")
        if not isinstance(sigma, (int, float)):
            raise ValueError("noise visual needs a numeric sigma")
        return Noise(sigma=float(sigma))
    raise ValueError(f"unknown visual variant {kind!r}")


def _checked_scores(scores: list[float]) -> list[float]:
    if any(not math.isfinite(x) or x < 0.0 for x in scores):
        raise ValueError("attention hook produced invalid scores")
    if sum(scores) > 1.0 + 1e-6:
        raise ValueError("attention scores sum above 1")
    return scores


def _checked_logits(logits: list[float]) -> list[float]:
    if any(not math.isfinite(x) for x in logits):
        raise ValueError("model produced non-finite logits")
    return logits


class AdapterServer:
    """Serve one model session per connection over dataset examples."""

    def __init__(
        self,
        model: TinyVLM,
        hook: HookConfig,
        examples: list[Example],
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        if not examples:
            raise ValueError("need at least one example to serve")
        self._model = model
        self._hook = hook
        self._examples = examples
        try:
            self._listener = socket.create_server((host, port))
        except OSError as exc:
            raise OSError(f"cannot bind {host}:{port}: {exc}") from exc
        self._listener.settimeout(0.2)
        self._connection_count = 0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        host, port = self._listener.getsockname()[:2]
        return f"{host}:{port}"

    def serve_forever(self):
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except TimeoutError:
                continue
            except OSError:
                break
            with conn:
                example = self._examples[self._connection_count % len(self._examples)]
                self._connection_count += 1
                try:
                    self._serve_connection(conn, example)
                except (BrokenPipeError, ConnectionResetError, OSError):
                    logger.debug("connection dropped mid-session")

    def _serve_connection(self, conn: socket.socket, example: Example):
        rfile = conn.makefile("rb")
        wfile = conn.makefile("wb")
        wfile.write(
            encode_message(
                {
                    "type": "hello",
                    "version": WIRE_VERSION,
                    "n_tokens": N_TOKENS,
                    "vocab_size": len(VOCAB),
                }
            )
        )
        wfile.flush()
        for line in rfile:
            wfile.write(encode_message(self._reply(example, line)))
            wfile.flush()

    def _reply(self, example: Example, line: bytes) -> dict:
        request_id = None
        try:
            message = decode_message(line)
            request_id = message.get("id")
            kind = message.get("type")
            if kind == "attention_req":
                scores = self._model.attention(
                    example.features, str(message["instruction"]), self._hook
                )
                return {
                    "type": "attention_resp",
                    "id": request_id,
                    "scores": _checked_scores(scores),
                }
            if kind == "step_req":
                visual = visual_from_fields(message)
                prefix = [int(t) for t in message.get("prefix", [])]
                logits = self._model.step(
                    example.features, visual, str(message.get("query", "")), prefix
                )
                return {
                    "type": "step_resp",
                    "id": request_id,
                    "logits": _checked_logits(logits),
                }
            return {
                "type": "error",
                "id": request_id,
                "reason": f"unsupported message type {kind!r}",
            }
        except (KeyError, TypeError, ValueError) as exc:
            return {"type": "error", "id": request_id, "reason": str(exc)}

    def start(self):
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()

    def stop(self):
        self._stop.set()
        self._listener.close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc_info):
        self.stop()
