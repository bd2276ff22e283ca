"""Contrastive next-token distribution and the autoregressive loop.

Each decode step runs the model twice, on the original visual input and
on the negative sample, and combines the two logit vectors as

    softmax((1 + alpha) * log_softmax(base) - alpha * log_softmax(negative))

computed with max-subtraction stability.  The token selection behind the
negative sample is computed once per query, before generation begins,
never per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from iava.backend import kernels
from iava.errors import (
    DegenerateDistribution,
    InvariantViolation,
    LengthMismatch,
    NonFiniteLogit,
    SessionFailure,
)
from iava.negative_sample import MaskSpec, NegativeStrategy, NoiseSpec, build_mask
from iava.selection import TokenSelection

VisualVariant = str | MaskSpec | NoiseSpec  # "original" | "none" | spec objects


@dataclass(frozen=True, eq=False)
class StepLogits:
    """Paired vocabulary logits from the original and negative passes."""

    base: np.ndarray
    negative: np.ndarray


@dataclass(frozen=True)
class DecodeConfig:
    """Contrastive strength, sampling rule, loop bounds, and seed."""

    alpha: float = 1.0
    mode: str = "greedy"
    temperature: float = 1.0
    max_steps: int = 16
    stop_tokens: frozenset[int] = field(default_factory=frozenset)
    seed: int = 42
    min_base_prob: float = 0.0

    def __post_init__(self):
        if self.alpha < 0.0:
            raise InvariantViolation("alpha must be >= 0")
        if self.mode not in ("greedy", "sample"):
            raise InvariantViolation(f"mode must be greedy or sample, not {self.mode!r}")
        if not self.temperature > 0.0:
            raise InvariantViolation("temperature must be > 0")
        if self.max_steps < 1:
            raise InvariantViolation("max_steps must be >= 1")
        if not 0.0 <= self.min_base_prob <= 1.0:
            raise InvariantViolation("min_base_prob must be in [0, 1]")


def _as_logits(values, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InvariantViolation(f"{name} logits must be one-dimensional")
    if arr.size < 2:
        raise InvariantViolation(f"{name} logits need at least 2 entries")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteLogit(f"{name} logits contain NaN or infinity")
    return arr


def _step_pair(step: StepLogits) -> tuple[np.ndarray, np.ndarray]:
    base = _as_logits(step.base, "base")
    negative = _as_logits(step.negative, "negative")
    if base.size != negative.size:
        raise LengthMismatch(
            f"base has {base.size} logits, negative has {negative.size}"
        )
    return base, negative


def contrastive_distribution(step: StepLogits, alpha: float) -> np.ndarray:
    """Probability vector of the contrastive combination."""
    if alpha < 0.0:
        raise InvariantViolation("alpha must be >= 0")
    base, negative = _step_pair(step)
    return kernels.contrastive(base, negative, float(alpha))


def base_distribution(logits) -> np.ndarray:
    """Plain softmax of one pass, for strategy-free decoding."""
    arr = _as_logits(logits, "base")
    return np.exp(kernels.log_softmax(arr))


def _plausibility_filter(dist: np.ndarray, base: np.ndarray, min_frac: float) -> np.ndarray:
    """Zero out tokens whose base probability is below min_frac of the max."""
    base_probs = np.exp(kernels.log_softmax(base))
    keep = base_probs >= min_frac * base_probs.max()
    filtered = np.where(keep, dist, 0.0)
    total = filtered.sum()
    if total <= 0.0:
        raise DegenerateDistribution("plausibility filter removed all mass")
    return filtered / total


def pick_token(dist: np.ndarray, config: DecodeConfig, rng: np.random.Generator) -> int:
    """Greedy argmax (lowest index on ties) or seeded temperature sampling."""
    probs = np.asarray(dist, dtype=np.float64)
    if config.mode == "greedy":
        return int(np.argmax(probs))
    weights = np.power(probs, 1.0 / config.temperature)
    total = weights.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateDistribution("no probability mass after temperature reshaping")
    return int(rng.choice(probs.size, p=weights / total))


def strategy_visual(strategy: NegativeStrategy, selection: TokenSelection | None):
    """The step-request visual variant realizing a strategy."""
    if strategy.kind == "iava-mask":
        if strategy.mask is not None:
            return strategy.mask
        if selection is None:
            raise InvariantViolation("iava-mask template needs a token selection")
        return build_mask(selection)
    if strategy.kind == "gaussian-noise":
        return NoiseSpec(sigma=strategy.sigma)
    return "none"


def decode_with_strategy(
    session,
    query: str,
    strategy: NegativeStrategy | None,
    config: DecodeConfig,
    selection: TokenSelection | None = None,
) -> list[int]:
    """Generation loop; strategy None decodes from the base pass alone."""
    visual = None if strategy is None else strategy_visual(strategy, selection)
    rng = np.random.default_rng(config.seed)
    prefix: list[int] = []
    for step_index in range(config.max_steps):
        try:
            base = session.step("original", query, prefix)
            if visual is None:
                dist = base_distribution(base)
            else:
                negative = session.step(visual, query, prefix)
                dist = contrastive_distribution(StepLogits(base, negative), config.alpha)
                if config.min_base_prob > 0.0:
                    dist = _plausibility_filter(
                        dist, _as_logits(base, "base"), config.min_base_prob
                    )
        except SessionFailure as exc:
            raise SessionFailure(f"step {step_index}: {exc}") from exc
        token = pick_token(dist, config, rng)
        prefix.append(token)
        if token in config.stop_tokens:
            break
    return prefix


def decode_sequence(
    session,
    query: str,
    selection: TokenSelection,
    config: DecodeConfig,
) -> list[int]:
    """Contrastive decoding against the mask that keeps ``selection``."""
    strategy = NegativeStrategy(kind="iava-mask", mask=build_mask(selection))
    return decode_with_strategy(session, query, strategy, config)
