"""Engine-to-model contract: live wire sessions and offline traces.

Wire format: line-delimited JSON over a byte stream.  The model side
sends ``hello{version, n_tokens, vocab_size}`` first; afterwards the
engine sends one request at a time (``attention_req`` or ``step_req``)
and reads one reply (``attention_resp``, ``step_resp``, or ``error``).
Numbers travel as decimal JSON literals at full precision, so arrays
survive a round trip bit-exactly.

Trace files use the same encoding: a ``{"version": 1}`` header line,
then one record per line.
"""

from __future__ import annotations

import json
import socket
from dataclasses import dataclass

import numpy as np

from iava.errors import (
    ConnectFailure,
    HandshakeMismatch,
    InvariantViolation,
    ParseError,
    SessionFailure,
    UsageError,
)
from iava.negative_sample import MaskSpec, NoiseSpec

WIRE_VERSION = 1
TRACE_VERSION = 1
DEFAULT_TIMEOUT = 120.0

# The open-ended instruction behind the first attention pass; the query
# itself drives the second pass.
GENERAL_INSTRUCTION = "Describe the content of the image."

_JSON_SEPARATORS = (",", ":")


def encode_message(message: dict) -> bytes:
    """One wire message as a newline-terminated JSON line."""
    return (json.dumps(message, separators=_JSON_SEPARATORS) + "\n").encode("utf-8")


def decode_message(line: str | bytes, line_number: int | None = None) -> dict:
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not valid UTF-8: {exc}", line_number) from exc
    try:
        message = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line_number) from exc
    if not isinstance(message, dict):
        raise ParseError("message is not an object", line_number)
    return message


def visual_to_fields(visual) -> dict:
    """Encode a step request's visual variant into message fields."""
    if visual == "original" or visual == "none":
        return {"visual": visual}
    if isinstance(visual, MaskSpec):
        return {
            "visual": "mask",
            "keep": [int(j) for j in visual.keep],
            "policy": visual.policy,
        }
    if isinstance(visual, NoiseSpec):
        return {"visual": "noise", "sigma": float(visual.sigma)}
    raise InvariantViolation(f"unsupported visual variant {visual!r}")


def visual_from_fields(message: dict, total_tokens: int):
    """Decode message fields back into a visual variant."""
    kind = message.get("visual")
    if kind in ("original", "none"):
        return kind
    if kind == "mask":
        keep = message.get("keep")
        if not isinstance(keep, list):
            raise ParseError("mask visual needs a keep list")
        return MaskSpec(
            keep=tuple(int(j) for j in keep),
            total_tokens=total_tokens,
            policy=message.get("policy", "zero-fill"),
        )
    if kind == "noise":
        sigma = message.get("sigma")
        if not isinstance(sigma, (int, float)):
            raise ParseError("noise visual needs a numeric sigma")
        return NoiseSpec(sigma=float(sigma))
    raise ParseError(f"unknown visual variant {kind!r}")


def parse_address(address: str) -> tuple[str, int]:
    host, sep, port_text = address.rpartition(":")
    if not sep or not host:
        raise UsageError(f"address must be host:port, not {address!r}")
    try:
        port = int(port_text)
    except ValueError:
        raise UsageError(f"invalid port in address {address!r}") from None
    if not 0 <= port <= 65535:
        raise UsageError(f"port {port} outside [0, 65535]")
    return host, port


def _check_vector(values, expected_len: int, name: str, nonnegative: bool) -> np.ndarray:
    if not isinstance(values, list):
        raise SessionFailure(f"{name} is not a list")
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size != expected_len:
        raise SessionFailure(
            f"{name} has length {arr.size}, handshake declared {expected_len}"
        )
    if not np.all(np.isfinite(arr)):
        raise SessionFailure(f"{name} contains non-finite values")
    if nonnegative and np.any(arr < 0.0):
        raise SessionFailure(f"{name} contains negative attention scores")
    return arr


class RemoteSession:
    """Client side of one wire-protocol session."""

    def __init__(self, address: str, timeout: float = DEFAULT_TIMEOUT):
        host, port = parse_address(address)
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ConnectFailure(f"cannot connect to {address}: {exc}") from exc
        self._sock.settimeout(timeout)
        self._reader = self._sock.makefile("rb")
        self._next_id = 0
        hello = self._read_message()
        if hello.get("type") != "hello":
            raise HandshakeMismatch(f"expected hello, got {hello.get('type')!r}")
        if hello.get("version") != WIRE_VERSION:
            raise HandshakeMismatch(
                f"peer speaks version {hello.get('version')!r}, want {WIRE_VERSION}"
            )
        n_tokens = hello.get("n_tokens")
        vocab_size = hello.get("vocab_size")
        if not isinstance(n_tokens, int) or n_tokens < 1:
            raise HandshakeMismatch(f"bad n_tokens in hello: {n_tokens!r}")
        if not isinstance(vocab_size, int) or vocab_size < 2:
            raise HandshakeMismatch(f"bad vocab_size in hello: {vocab_size!r}")
        self._n_tokens = n_tokens
        self._vocab_size = vocab_size

    @property
    def n_tokens(self) -> int:
        return self._n_tokens

    @property
    def vocab_size(self) -> int:
        return self._vocab_size

    def _read_message(self) -> dict:
        try:
            line = self._reader.readline()
        except TimeoutError as exc:
            raise SessionFailure("request timed out") from exc
        except OSError as exc:
            raise SessionFailure(f"connection lost: {exc}") from exc
        if not line:
            raise SessionFailure("connection closed by peer")
        return decode_message(line)

    def _request(self, message: dict) -> dict:
        request_id = self._next_id
        self._next_id += 1
        message = {"id": request_id, **message}
        try:
            self._sock.sendall(encode_message(message))
        except OSError as exc:
            raise SessionFailure(f"send failed: {exc}") from exc
        reply = self._read_message()
        if reply.get("type") == "error":
            raise SessionFailure(f"peer error: {reply.get('reason', 'unspecified')}")
        if reply.get("id") != request_id:
            raise SessionFailure(
                f"reply id {reply.get('id')!r} does not match request {request_id}"
            )
        expected = message["type"].replace("_req", "_resp")
        if reply.get("type") != expected:
            raise SessionFailure(f"expected {expected}, got {reply.get('type')!r}")
        return reply

    def attention(self, instruction: str) -> np.ndarray:
        reply = self._request({"type": "attention_req", "instruction": instruction})
        return _check_vector(reply.get("scores"), self._n_tokens, "scores", True)

    def step(self, visual, query: str, prefix) -> np.ndarray:
        message = {"type": "step_req", **visual_to_fields(visual)}
        message["query"] = query
        message["prefix"] = [int(t) for t in prefix]
        reply = self._request(message)
        return _check_vector(reply.get("logits"), self._vocab_size, "logits", False)

    def close(self):
        try:
            self._reader.close()
        finally:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def serve_session(session, rfile, wfile):
    """Answer one connection's requests from a ModelSession until EOF.

    Malformed or unsupported requests get an ``error`` reply; the loop
    keeps serving afterwards.
    """
    wfile.write(
        encode_message(
            {
                "type": "hello",
                "version": WIRE_VERSION,
                "n_tokens": session.n_tokens,
                "vocab_size": session.vocab_size,
            }
        )
    )
    wfile.flush()
    for line in rfile:
        request_id = None
        try:
            message = decode_message(line)
            request_id = message.get("id")
            kind = message.get("type")
            if kind == "attention_req":
                scores = session.attention(str(message["instruction"]))
                reply = {
                    "type": "attention_resp",
                    "id": request_id,
                    "scores": [float(x) for x in scores],
                }
            elif kind == "step_req":
                visual = visual_from_fields(message, session.n_tokens)
                prefix = [int(t) for t in message.get("prefix", [])]
                logits = session.step(visual, str(message.get("query", "")), prefix)
                reply = {
                    "type": "step_resp",
                    "id": request_id,
                    "logits": [float(x) for x in logits],
                }
            else:
                reply = {
                    "type": "error",
                    "id": request_id,
                    "reason": f"unsupported message type {kind!r}",
                }
        except (KeyError, TypeError, ValueError, ParseError, InvariantViolation) as exc:
            reply = {"type": "error", "id": request_id, "reason": str(exc)}
        wfile.write(encode_message(reply))
        wfile.flush()


def open_session(endpoint, example_index: int = 0, timeout: float = DEFAULT_TIMEOUT):
    """Open a ModelSession from an endpoint description.

    A string is treated as an external ``host:port`` address; a ToyConfig
    builds an in-process toy session over scene ``example_index``.
    """
    if isinstance(endpoint, str):
        return RemoteSession(endpoint, timeout=timeout)
    from iava.toy_lvlm import ToyConfig, ToySession

    if isinstance(endpoint, ToyConfig):
        return ToySession.for_example(endpoint, example_index)
    raise UsageError(f"unsupported endpoint {endpoint!r}")


@dataclass(frozen=True)
class CandidateAnswer:
    """One candidate label with its base and negative logits."""

    label: str
    base: float
    negative: float


@dataclass(frozen=True, eq=False)
class TraceRecord:
    """Offline record of one example's attention and candidate logits."""

    id: str
    n_tokens: int
    att1: np.ndarray
    att2: np.ndarray
    candidate_answers: tuple[CandidateAnswer, ...]
    gold: str

    def validate(self):
        if self.n_tokens < 1:
            raise InvariantViolation(f"record {self.id!r}: n_tokens must be >= 1")
        for name, arr in (("att1", self.att1), ("att2", self.att2)):
            if arr.ndim != 1 or arr.size != self.n_tokens:
                raise InvariantViolation(
                    f"record {self.id!r}: {name} length {arr.size} "
                    f"does not match n_tokens {self.n_tokens}"
                )
            if not np.all(np.isfinite(arr)):
                raise InvariantViolation(f"record {self.id!r}: {name} not finite")
            if np.any(arr < 0.0):
                raise InvariantViolation(f"record {self.id!r}: {name} negative")
        if not self.candidate_answers:
            raise InvariantViolation(f"record {self.id!r}: no candidate answers")
        for cand in self.candidate_answers:
            if not np.isfinite(cand.base) or not np.isfinite(cand.negative):
                raise InvariantViolation(
                    f"record {self.id!r}: candidate {cand.label!r} not finite"
                )
        if self.gold not in {c.label for c in self.candidate_answers}:
            raise InvariantViolation(
                f"record {self.id!r}: gold {self.gold!r} not among candidates"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, TraceRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.n_tokens == other.n_tokens
            and np.array_equal(self.att1, other.att1)
            and np.array_equal(self.att2, other.att2)
            and self.candidate_answers == other.candidate_answers
            and self.gold == other.gold
        )


def record_to_payload(record: TraceRecord) -> dict:
    return {
        "id": record.id,
        "n_tokens": record.n_tokens,
        "att1": [float(x) for x in record.att1],
        "att2": [float(x) for x in record.att2],
        "candidate_answers": [
            {"label": c.label, "base": c.base, "negative": c.negative}
            for c in record.candidate_answers
        ],
        "gold": record.gold,
    }


def record_from_payload(payload: dict, line_number: int | None = None) -> TraceRecord:
    try:
        candidates = tuple(
            CandidateAnswer(
                label=str(c["label"]),
                base=float(c["base"]),
                negative=float(c["negative"]),
            )
            for c in payload["candidate_answers"]
        )
        record = TraceRecord(
            id=str(payload["id"]),
            n_tokens=int(payload["n_tokens"]),
            att1=np.asarray(payload["att1"], dtype=np.float64),
            att2=np.asarray(payload["att2"], dtype=np.float64),
            candidate_answers=candidates,
            gold=str(payload["gold"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad trace record: {exc}", line_number) from exc
    return record


def write_traces(records, path):
    """Write a version header plus one record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"version": TRACE_VERSION}, separators=_JSON_SEPARATORS))
        fh.write("\n")
        for record in records:
            record.validate()
            fh.write(json.dumps(record_to_payload(record), separators=_JSON_SEPARATORS))
            fh.write("\n")


def read_traces(path):
    """Yield validated TraceRecords; empty files yield nothing."""
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            return
        header = decode_message(header_line, 1)
        if header.get("version") != TRACE_VERSION:
            raise ParseError(
                f"unsupported trace version {header.get('version')!r}", 1
            )
        for line_number, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            payload = decode_message(line, line_number)
            record = record_from_payload(payload, line_number)
            record.validate()
            yield record
