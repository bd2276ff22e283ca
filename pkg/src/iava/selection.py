"""Irrelevant-token selection from paired attention passes.

An attention vector holds one nonnegative score per image token.  Two
passes are compared: att1 from the open-ended general instruction and
att2 from the actual query.  A token is irrelevant when its attention
change att2 - att1 is strictly negative, strictly below the value at
rank ``i`` of the ascending-sorted change vector, and its att1 score
strictly exceeds mu + lambda * sigma of att1.

Attention vectors are plain float64 numpy arrays (or anything
np.asarray accepts); validation happens at this module's boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from iava.backend import kernels
from iava.errors import (
    EmptyVector,
    InvariantViolation,
    LengthMismatch,
    NonFiniteScore,
    RankOutOfRange,
)


@dataclass(frozen=True)
class AttentionStats:
    """Mean and population standard deviation of one attention pass."""

    mu: float
    sigma: float


@dataclass(frozen=True)
class SelectionParams:
    """Rank cutoff i and standard-deviation multiplier lambda."""

    i: int
    lam: float


@dataclass(frozen=True)
class TokenSelection:
    """Sorted, unique indices of the irrelevant image tokens."""

    indices: tuple[int, ...]
    total_tokens: int

    def __post_init__(self):
        if self.total_tokens < 1:
            raise InvariantViolation("total_tokens must be >= 1")
        prev = -1
        for idx in self.indices:
            if not 0 <= idx < self.total_tokens:
                raise InvariantViolation(
                    f"index {idx} outside [0, {self.total_tokens - 1}]"
                )
            if idx <= prev:
                raise InvariantViolation("indices must be strictly ascending")
            prev = idx

    def __len__(self) -> int:
        return len(self.indices)


def as_attention(scores, name: str = "attention") -> np.ndarray:
    """Validate and convert one attention vector to float64."""
    arr = np.ascontiguousarray(scores, dtype=np.float64)
    if arr.ndim != 1:
        raise InvariantViolation(f"{name} must be one-dimensional")
    if arr.size == 0:
        raise EmptyVector(f"{name} has no entries")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteScore(f"{name} contains NaN or infinite scores")
    if np.any(arr < 0.0):
        raise NonFiniteScore(f"{name} contains negative scores")
    return arr


def _as_pair(att1, att2) -> tuple[np.ndarray, np.ndarray]:
    a1 = as_attention(att1, "att1")
    a2 = as_attention(att2, "att2")
    if a1.size != a2.size:
        raise LengthMismatch(f"att1 has {a1.size} entries, att2 has {a2.size}")
    return a1, a2


def attention_stats(att1) -> AttentionStats:
    """Mean and population standard deviation (divisor = length)."""
    arr = as_attention(att1)
    mu, sigma = kernels.stats(arr)
    return AttentionStats(mu=mu, sigma=sigma)


def delta_attention(att1, att2) -> np.ndarray:
    """Elementwise attention change att2 - att1."""
    a1, a2 = _as_pair(att1, att2)
    return kernels.delta(a1, a2)


def select_irrelevant(att1, att2, params: SelectionParams) -> TokenSelection:
    """Apply the three-condition irrelevance rule."""
    a1, a2 = _as_pair(att1, att2)
    if not 0 <= params.i < a1.size:
        raise RankOutOfRange(
            f"rank cutoff i={params.i} outside [0, {a1.size - 1}]"
        )
    picked = kernels.select(a1, a2, int(params.i), float(params.lam))
    return TokenSelection(indices=tuple(int(j) for j in picked), total_tokens=a1.size)
