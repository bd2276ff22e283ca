"""Offline trace export in the engine's file format.

A trace file starts with a ``{"version": 1}`` header line followed by
one JSON record per example: both attention passes, the candidate
answer logits from the original visual input, and the logits from a
masked pass that retains only the locally selected tokens.  Floats are
written as plain JSON literals at full precision, so the engine reads
back bit-identical values and its selection lands on the same indices.

Per-example failures are logged and skipped; the summary reports both
counts plus the selection used for every written record.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from iava_adapter.model import (
    GENERAL_INSTRUCTION,
    N_TOKENS,
    NO,
    YES,
    Example,
    HookConfig,
    Mask,
    TinyVLM,
)
from iava_adapter.selection import resolve_params, select_irrelevant

logger = logging.getLogger(__name__)

TRACE_VERSION = 1
CANDIDATE_LABELS = ("yes", "no")

_JSON_SEPARATORS = (",", ":")


@dataclass(frozen=True)
class ExportSummary:
    """Outcome of one export run."""

    written: int
    skipped: int
    selections: dict[str, tuple[int, ...]]


def export_traces(
    model: TinyVLM,
    hook: HookConfig,
    examples,
    path,
    i: int | None = None,
    lam: float | None = None,
) -> ExportSummary:
    """Write one trace record per example; skip and count failures."""
    rank, lam_value = resolve_params(N_TOKENS, i, lam)
    selections: dict[str, tuple[int, ...]] = {}
    written = 0
    skipped = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps({"version": TRACE_VERSION}, separators=_JSON_SEPARATORS) + "\n"
        )
        for example in examples:
            try:
                payload, selection = _export_one(model, hook, example, rank, lam_value)
            except (TypeError, ValueError, RuntimeError) as exc:
                logger.warning("skipping example %s: %s", example.id, exc)
                skipped += 1
                continue
            fh.write(json.dumps(payload, separators=_JSON_SEPARATORS) + "\n")
            selections[example.id] = selection
            written += 1
    return ExportSummary(written=written, skipped=skipped, selections=selections)


def _export_one(
    model: TinyVLM, hook: HookConfig, example: Example, rank: int, lam: float
):
    if example.gold not in CANDIDATE_LABELS:
        raise ValueError(f"gold label {example.gold!r} not a candidate answer")
    att1 = model.attention(example.features, GENERAL_INSTRUCTION, hook)
    att2 = model.attention(example.features, example.question, hook)
    for name, scores in (("att1", att1), ("att2", att2)):
        arr = np.asarray(scores, dtype=np.float64)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
            raise ValueError(f"{name} contains invalid attention scores")
    selection = select_irrelevant(att1, att2, rank, lam)
    base = model.step(example.features, "original", example.question, ())
    negative = model.step(
        example.features,
        Mask(keep=selection, policy=hook.mask_policy),
        example.question,
        (),
    )
    for name, logits in (("base", base), ("negative", negative)):
        if not np.all(np.isfinite(np.asarray(logits, dtype=np.float64))):
            raise ValueError(f"{name} logits are not finite")
    payload = {
        "id": example.id,
        "n_tokens": len(att1),
        "att1": att1,
        "att2": att2,
        "candidate_answers": [
            {"label": "yes", "base": base[YES], "negative": negative[YES]},
            {"label": "no", "base": base[NO], "negative": negative[NO]},
        ],
        "gold": example.gold,
    }
    return payload, selection
