"""Negative-sample construction.

The contrastive pass needs a corrupted visual input.  The main variant
keeps only the irrelevant tokens and masks the rest; Gaussian-noise and
text-only variants exist as interface-level stand-ins for the common
comparison baselines.
"""

from __future__ import annotations

from dataclasses import dataclass

from iava.errors import InvariantViolation
from iava.selection import TokenSelection

MASK_POLICIES = ("zero-fill", "mask-token", "drop")
STRATEGY_KINDS = ("iava-mask", "gaussian-noise", "text-only")


@dataclass(frozen=True)
class MaskSpec:
    """Visual input that retains ``keep`` and masks every other token."""

    keep: tuple[int, ...]
    total_tokens: int
    policy: str = "zero-fill"

    def __post_init__(self):
        if self.policy not in MASK_POLICIES:
            raise InvariantViolation(
                f"policy must be one of {MASK_POLICIES}, not {self.policy!r}"
            )
        if self.total_tokens < 1:
            raise InvariantViolation("total_tokens must be >= 1")
        prev = -1
        for idx in self.keep:
            if not 0 <= idx < self.total_tokens:
                raise InvariantViolation(
                    f"keep index {idx} outside [0, {self.total_tokens - 1}]"
                )
            if idx <= prev:
                raise InvariantViolation("keep indices must be strictly ascending")
            prev = idx

    @property
    def masked_count(self) -> int:
        return self.total_tokens - len(self.keep)


@dataclass(frozen=True)
class NoiseSpec:
    """Visual input replaced by Gaussian noise of the given sigma."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise InvariantViolation("noise sigma must be > 0")


@dataclass(frozen=True)
class NegativeStrategy:
    """Which corrupted visual input the contrastive pass uses.

    ``iava-mask`` with mask=None is a template: the concrete MaskSpec is
    derived per example from that example's token selection.
    """

    kind: str
    mask: MaskSpec | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise InvariantViolation(
                f"kind must be one of {STRATEGY_KINDS}, not {self.kind!r}"
            )
        if self.kind == "gaussian-noise":
            if self.sigma is None or not self.sigma > 0.0:
                raise InvariantViolation("gaussian-noise requires sigma > 0")
        elif self.sigma is not None:
            raise InvariantViolation(f"{self.kind} takes no sigma")
        if self.kind != "iava-mask" and self.mask is not None:
            raise InvariantViolation(f"{self.kind} takes no mask")


def build_mask(selection: TokenSelection, policy: str = "zero-fill") -> MaskSpec:
    """Mask spec keeping exactly the selected (irrelevant) tokens."""
    return MaskSpec(
        keep=selection.indices,
        total_tokens=selection.total_tokens,
        policy=policy,
    )


def describe_strategy(strategy: NegativeStrategy) -> str:
    """Deterministic one-line summary for logs and reports."""
    if strategy.kind == "iava-mask":
        if strategy.mask is None:
            return "iava-mask keep=per-example policy=zero-fill"
        mask = strategy.mask
        return f"iava-mask keep={len(mask.keep)}/{mask.total_tokens} policy={mask.policy}"
    if strategy.kind == "gaussian-noise":
        return f"gaussian-noise sigma={strategy.sigma}"
    return "text-only"
