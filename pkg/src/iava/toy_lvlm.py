"""Deterministic synthetic vision-language model.

Each scene is a bag of image tokens with three hidden attributes:
saliency (drives attention under the open-ended general instruction),
query relevance (drives attention under the actual question), and
evidence (+1 supports "yes", 0 neutral).  Distractors are salient
evidence-bearing tokens with near-zero relevance; together with a
hallucination prior they make base decoding answer "yes" on scenes
whose true answer is "no".

Besides distractors and (on gold-yes scenes) answer tokens, scenes
contain two salient neutral clusters that shape the rank-cutoff
ablation: decoy tokens whose attention drops as deeply as the
distractors' (small cutoffs sometimes keep only decoys, weakening the
negative sample) and context tokens with slight relevance whose drop is
shallow (large cutoffs pull them into the keep-set and dilute it).
Remaining tokens are a low-saliency floor.

Scene draws, attention, and logits are fully deterministic at a fixed
seed; scene k of seed s uses an RNG derived from entropy (s, k).
"""

from __future__ import annotations

import socket
import threading
from dataclasses import dataclass

import numpy as np

from iava import protocol
from iava.errors import ConnectFailure, InvariantViolation
from iava.negative_sample import MaskSpec, NoiseSpec
from iava.protocol import GENERAL_INSTRUCTION

VOCAB = ("yes", "no", "eos")
YES, NO, EOS = 0, 1, 2

TOY_QUERY = "Is the queried object present in the image?"

DISTRACTOR_SALIENCY = (0.88, 0.98)
ANSWER_SALIENCY = (0.35, 0.65)
ANSWER_RELEVANCE = (0.7, 1.0)
DECOY_SALIENCY = (0.88, 1.0)
DECOY_RELEVANCE = (0.0, 0.04)
CONTEXT_SALIENCY = (0.86, 0.98)
CONTEXT_RELEVANCE = (0.06, 0.12)
FLOOR_SALIENCY = (0.0, 0.3)
FLOOR_RELEVANCE = (0.0, 0.3)

# First-step eos logit sits far below the answer logits so the first
# token is always yes or no; the second step is a fixed eos emission.
FIRST_STEP_EOS_LOGIT = -8.0
EOS_STEP_LOGITS = (-8.0, -8.0, 8.0)


@dataclass(frozen=True)
class ToyConfig:
    """Simulator constants; defaults match the reference benchmark."""

    n_tokens: int = 32
    n_distractors: int = 6
    a: float = 6.0
    b: float = 8.0
    rho: float = 0.25
    h: float = 2.0
    seed: int = 42

    def __post_init__(self):
        if self.n_tokens < 1:
            raise InvariantViolation("n_tokens must be >= 1")
        if not 0 <= self.n_distractors < self.n_tokens:
            raise InvariantViolation("need 0 <= n_distractors < n_tokens")
        if not 0.0 < self.rho < 1.0:
            raise InvariantViolation("rho must be in (0, 1)")
        fixed = self.n_distractors + self.n_decoys + self.n_context
        if fixed >= self.n_tokens:
            raise InvariantViolation(
                f"{self.n_tokens} tokens cannot fit {self.n_distractors} "
                "distractors plus the derived decoy and context clusters"
            )

    @property
    def n_decoys(self) -> int:
        return (5 * self.n_distractors) // 6

    @property
    def n_context(self) -> int:
        return (10 * self.n_distractors) // 6


@dataclass(frozen=True, eq=False)
class Scene:
    """One synthetic image: per-token attributes plus the gold answer."""

    saliency: np.ndarray
    relevance: np.ndarray
    evidence: np.ndarray
    gold: str
    config: ToyConfig

    def __post_init__(self):
        n = self.config.n_tokens
        for name in ("saliency", "relevance", "evidence"):
            if getattr(self, name).shape != (n,):
                raise InvariantViolation(f"{name} must have shape ({n},)")
        has_answer = bool(np.any((self.relevance >= 0.5) & (self.evidence == 1)))
        if (self.gold == "yes") != has_answer:
            raise InvariantViolation(
                "gold must be yes exactly when a relevant +1-evidence token exists"
            )

    @property
    def distractors(self) -> np.ndarray:
        """Distractor mask: presence-signalling tokens the query ignores."""
        return (self.evidence == 1) & (self.relevance < 0.5)


def scene_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for scene ``index`` of benchmark ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), int(index))))


def generate_scene(config: ToyConfig, rng: np.random.Generator) -> Scene:
    gold_yes = rng.random() < 0.5
    capacity = (
        config.n_tokens - config.n_distractors - config.n_decoys - config.n_context
    )
    # The integers draw always happens so the stream is config-independent;
    # the cap only binds on tiny configs, never on the default one.
    n_answers = min(int(rng.integers(1, 4)), capacity) if gold_yes else 0
    rows: list[tuple[float, float, int]] = []
    for _ in range(config.n_distractors):
        rows.append((rng.uniform(*DISTRACTOR_SALIENCY), 0.0, 1))
    for _ in range(n_answers):
        rows.append(
            (rng.uniform(*ANSWER_SALIENCY), rng.uniform(*ANSWER_RELEVANCE), 1)
        )
    for _ in range(config.n_decoys):
        rows.append((rng.uniform(*DECOY_SALIENCY), rng.uniform(*DECOY_RELEVANCE), 0))
    for _ in range(config.n_context):
        rows.append(
            (rng.uniform(*CONTEXT_SALIENCY), rng.uniform(*CONTEXT_RELEVANCE), 0)
        )
    for _ in range(config.n_tokens - len(rows)):
        rows.append((rng.uniform(*FLOOR_SALIENCY), rng.uniform(*FLOOR_RELEVANCE), 0))
    order = rng.permutation(len(rows))
    rows = [rows[k] for k in order]
    return Scene(
        saliency=np.array([row[0] for row in rows]),
        relevance=np.array([row[1] for row in rows]),
        evidence=np.array([row[2] for row in rows], dtype=np.int64),
        gold="yes" if gold_yes else "no",
        config=config,
    )


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = np.exp(x - x.max())
    return shifted / shifted.sum()


def toy_attention(scene: Scene, instruction_kind: str) -> np.ndarray:
    """Attention over tokens for the general or query instruction."""
    cfg = scene.config
    if instruction_kind == "general":
        return _softmax(cfg.a * scene.saliency)
    if instruction_kind == "query":
        return _softmax(cfg.a * cfg.rho * scene.saliency + cfg.b * scene.relevance)
    raise InvariantViolation(
        f"instruction_kind must be general or query, not {instruction_kind!r}"
    )


def _visibility(scene: Scene, visual) -> tuple[np.ndarray | None, str, float]:
    """(visible mask, attention pattern, evidence scale) for a visual variant.

    Returns (None, _, _) for the no-visual variant.  Noise makes the
    objects unreadable (evidence scale 0) while attention falls back to
    the saliency-driven general pattern and the hallucination prior
    persists; any sigma > 0 behaves the same in the toy.
    """
    n = scene.config.n_tokens
    if visual == "original":
        return np.ones(n, dtype=bool), "query", 1.0
    if visual == "none":
        return None, "query", 1.0
    if isinstance(visual, MaskSpec):
        if visual.total_tokens != n:
            raise InvariantViolation(
                f"mask covers {visual.total_tokens} tokens, scene has {n}"
            )
        mask = np.zeros(n, dtype=bool)
        mask[list(visual.keep)] = True
        return mask, "query", 1.0
    if isinstance(visual, NoiseSpec):
        return np.ones(n, dtype=bool), "general", 0.0
    raise InvariantViolation(f"unsupported visual variant {visual!r}")


def toy_step(scene: Scene, visual, query: str, prefix) -> np.ndarray:
    """Logits over (yes, no, eos) for one decode step.

    First step: logit(yes) - logit(no) is the visible-token sum of
    attention-weighted evidence plus the hallucination prior h on
    visible distractors, with attention renormalized over the visible
    tokens.  All mask policies hide tokens the same way here.  Later
    steps emit eos.
    """
    if len(prefix) > 0:
        return np.array(EOS_STEP_LOGITS)
    visible, pattern, evidence_scale = _visibility(scene, visual)
    diff = 0.0
    if visible is not None and visible.any():
        att = toy_attention(scene, pattern) * visible
        att = att / att.sum()
        cfg = scene.config
        evidence_term = att * scene.evidence * (1.0 + cfg.b * scene.relevance)
        prior_term = cfg.h * att * scene.distractors
        diff = float(evidence_scale * evidence_term.sum() + prior_term.sum())
    return np.array([0.5 * diff, -0.5 * diff, FIRST_STEP_EOS_LOGIT])


class ToySession:
    """In-process ModelSession over one scene."""

    def __init__(self, scene: Scene):
        self._scene = scene

    @classmethod
    def for_example(cls, config: ToyConfig, index: int) -> "ToySession":
        return cls(generate_scene(config, scene_rng(config.seed, index)))

    @property
    def scene(self) -> Scene:
        return self._scene

    @property
    def n_tokens(self) -> int:
        return self._scene.config.n_tokens

    @property
    def vocab_size(self) -> int:
        return len(VOCAB)

    def attention(self, instruction: str) -> np.ndarray:
        kind = "general" if instruction == GENERAL_INSTRUCTION else "query"
        return toy_attention(self._scene, kind)

    def step(self, visual, query: str, prefix) -> np.ndarray:
        return toy_step(self._scene, visual, query, prefix)

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


class ToyServer:
    """Wire-protocol server over toy scenes, one connection at a time.

    The k-th accepted connection serves scene k of the configured seed,
    mirroring the in-process benchmark's scene order, so a remote run
    against a fresh server reproduces the in-process run exactly.
    """

    def __init__(self, config: ToyConfig, host: str = "127.0.0.1", port: int = 0):
        self._config = config
        try:
            self._listener = socket.create_server((host, port))
        except OSError as exc:
            raise ConnectFailure(f"cannot bind {host}:{port}: {exc}") from exc
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
                session = ToySession.for_example(self._config, self._connection_count)
                self._connection_count += 1
                rfile = conn.makefile("rb")
                wfile = conn.makefile("wb")
                try:
                    protocol.serve_session(session, rfile, wfile)
                except (BrokenPipeError, ConnectionResetError, OSError):
                    pass

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
