"""Small instruction-conditioned attention model with hookable weights.

The engine treats whatever sits behind the wire protocol as a black
box: it asks for per-image-token attention under two instructions, then
for next-token logits under a visual variant (original, fully removed,
masked, or noise-perturbed).  This module provides a deterministic host
model with that observable surface: multi-head cross-attention from an
instruction query over image-token features, per-layer per-head weights
a HookConfig can point at, and a {yes, no, eos} answer vocabulary.

Weights are seeded at construction, inference runs without gradients,
and the noise variant draws from a fixed generator, so every call is
repeatable.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

MODEL_ID = "tiny-32"
N_TOKENS = 32
EMBED_DIM = 16
N_HEADS = 4
N_LAYERS = 2
TEXT_VOCAB = 64

VOCAB = ("yes", "no", "eos")
YES, NO, EOS = 0, 1, 2

# The open-ended instruction behind the first attention pass.
GENERAL_INSTRUCTION = "Describe the content of the image."

# Once any token has been emitted the answer is over; eos must win.
_EOS_LOGITS = (-8.0, -8.0, 8.0)
_NOISE_SEED = 20240611

HEAD_AGGREGATIONS = ("mean", "max")
MASK_POLICIES = ("zero-fill", "mask-token", "drop")
QUERY_POSITIONS = ("last-instruction-token",)


def word_ids(text: str) -> list[int]:
    """Stable per-word embedding ids; builtin hash is process-salted."""
    return [
        zlib.crc32(word.encode("utf-8")) % TEXT_VOCAB for word in text.lower().split()
    ]


@dataclass(frozen=True)
class HookConfig:
    """Where attention scores are read and how masks are realized.

    ``layer`` is an attention-layer index (negative counts from the
    end) or ``"mean-all"`` for the average over layers.  ``heads``
    aggregates per-head weights by mean or by max (the max is
    renormalized so scores still sum to one).  The query position is
    the last instruction token; ``mask_policy`` picks how hidden token
    positions are realized when this config builds a mask.
    """

    model: str = MODEL_ID
    layer: int | str = -1
    heads: str = "mean"
    query_position: str = "last-instruction-token"
    mask_policy: str = "zero-fill"

    def __post_init__(self):
        if isinstance(self.layer, str):
            if self.layer != "mean-all":
                raise ValueError(
                    f"layer must be an index or 'mean-all', not {self.layer!r}"
                )
        elif not -N_LAYERS <= self.layer < N_LAYERS:
            raise ValueError(f"layer {self.layer} outside depth {N_LAYERS}")
        if self.heads not in HEAD_AGGREGATIONS:
            raise ValueError(f"heads must be one of {HEAD_AGGREGATIONS}")
        if self.query_position not in QUERY_POSITIONS:
            raise ValueError(f"query_position must be one of {QUERY_POSITIONS}")
        if self.mask_policy not in MASK_POLICIES:
            raise ValueError(f"mask_policy must be one of {MASK_POLICIES}")


@dataclass(frozen=True)
class Mask:
    """Visual variant that retains only the listed token positions."""

    keep: tuple[int, ...]
    policy: str = "zero-fill"

    def __post_init__(self):
        if self.policy not in MASK_POLICIES:
            raise ValueError(f"policy must be one of {MASK_POLICIES}")
        seen = set()
        for index in self.keep:
            if not 0 <= index < N_TOKENS:
                raise ValueError(f"keep index {index} outside [0, {N_TOKENS})")
            if index in seen:
                raise ValueError(f"duplicate keep index {index}")
            seen.add(index)


@dataclass(frozen=True)
class Noise:
    """Visual variant that adds gaussian noise to the token features."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class Example:
    """One object-presence question over a synthetic image."""

    id: str
    features: np.ndarray
    question: str
    gold: str


_OBJECTS = ("bottle", "chair", "dog", "umbrella", "laptop", "bicycle", "clock", "vase")


def make_dataset(n: int, seed: int = 0) -> list[Example]:
    """Synthetic presence-question examples with fixed feature grids."""
    rng = np.random.default_rng(seed)
    examples = []
    for k in range(n):
        features = rng.normal(0.0, 1.0, size=(N_TOKENS, EMBED_DIM)).astype(np.float32)
        obj = _OBJECTS[int(rng.integers(len(_OBJECTS)))]
        gold = "yes" if rng.random() < 0.5 else "no"
        examples.append(
            Example(
                id=f"pope-{k:04d}",
                features=features,
                question=f"Is there a {obj} in the image?",
                gold=gold,
            )
        )
    return examples


class TinyVLM(nn.Module):
    """Stacked cross-attention from an instruction query over image tokens.

    Each layer attends from the current query state to the (possibly
    masked) image-token features; the attended output plus the original
    query feeds the next layer, so later layers see both.  A linear
    head over the final output produces answer logits.
    """

    def __init__(self, seed: int = 7):
        super().__init__()
        torch.manual_seed(seed)
        self.token_embed = nn.Embedding(TEXT_VOCAB, EMBED_DIM)
        self.layers = nn.ModuleList(
            nn.MultiheadAttention(EMBED_DIM, N_HEADS, batch_first=True)
            for _ in range(N_LAYERS)
        )
        self.mask_token = nn.Parameter(torch.randn(EMBED_DIM) * 0.1)
        self.answer_head = nn.Linear(EMBED_DIM, len(VOCAB))
        with torch.no_grad():
            # The first emitted token should be an answer, not eos.
            self.answer_head.bias[EOS] -= 4.0
        self.eval()
        self.requires_grad_(False)

    def _query(self, instruction: str) -> torch.Tensor:
        ids = word_ids(instruction) or [0]
        embedded = self.token_embed(torch.tensor(ids))
        return embedded[-1].reshape(1, 1, EMBED_DIM)

    def _run(self, query: torch.Tensor, keys: torch.Tensor):
        """Run every layer; returns final output and per-layer weights."""
        state = query
        per_layer = []
        for layer in self.layers:
            attended, weights = layer(
                state, keys, keys, need_weights=True, average_attn_weights=False
            )
            state = attended + query
            per_layer.append(weights[0, :, 0, :])
        return state[0, 0], per_layer

    @torch.no_grad()
    def attention(self, features, instruction: str, hook: HookConfig) -> list[float]:
        """Per-image-token attention under one instruction, as floats."""
        keys = _to_features(features).unsqueeze(0)
        _, per_layer = self._run(self._query(instruction), keys)
        if hook.layer == "mean-all":
            weights = torch.stack(per_layer).mean(dim=0)
        else:
            weights = per_layer[hook.layer]
        if hook.heads == "mean":
            scores = weights.mean(dim=0)
        else:
            scores = weights.max(dim=0).values
            scores = scores / scores.sum()
        return [float(x) for x in scores]

    @torch.no_grad()
    def step(self, features, visual, query: str, prefix) -> list[float]:
        """Answer logits for one decode step under a visual variant."""
        if len(prefix) > 0:
            return list(_EOS_LOGITS)
        keys = self._realize(_to_features(features), visual)
        output, _ = self._run(self._query(query), keys.unsqueeze(0))
        return [float(x) for x in self.answer_head(output)]

    def _realize(self, feats: torch.Tensor, visual) -> torch.Tensor:
        if visual == "original":
            return feats
        if visual == "none":
            return torch.zeros_like(feats)
        if isinstance(visual, Mask):
            if visual.policy == "drop":
                kept = feats[list(visual.keep)]
                if kept.shape[0] == 0:
                    # Attention needs at least one key; a fully dropped
                    # image degrades to a single mask token.
                    return self.mask_token.reshape(1, EMBED_DIM)
                return kept
            hidden = [j for j in range(feats.shape[0]) if j not in set(visual.keep)]
            masked = feats.clone()
            if visual.policy == "zero-fill":
                masked[hidden] = 0.0
            else:
                masked[hidden] = self.mask_token
            return masked
        if isinstance(visual, Noise):
            generator = torch.Generator().manual_seed(_NOISE_SEED)
            perturbation = torch.randn(feats.shape, generator=generator)
            return feats + visual.sigma * perturbation
        raise ValueError(f"unsupported visual variant {visual!r}")


def _to_features(features) -> torch.Tensor:
    arr = np.ascontiguousarray(features, dtype=np.float32)
    if arr.ndim != 2 or arr.shape != (N_TOKENS, EMBED_DIM):
        raise ValueError(
            f"features must have shape ({N_TOKENS}, {EMBED_DIM}), got {arr.shape}"
        )
    return torch.from_numpy(arr)
