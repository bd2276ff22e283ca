"""Local copy of the engine's irrelevant-token selection rule.

The adapter never imports the engine, yet trace replay demands that the
index set it bakes into masked passes equal what the engine recomputes
from the same attention vectors.  The arithmetic here therefore follows
the engine's convention exactly: a token is selected when its attention
change (second pass minus first) is strictly negative, strictly below
the i-th smallest change (ascending, zero-based), and its first-pass
attention strictly exceeds mu + lam * sigma, with sigma the population
standard deviation of the first pass.
"""

from __future__ import annotations

import numpy as np

# Rank cutoff and lambda per image-token count, matching the engine.
SELECTION_DEFAULTS = {32: (16, -0.1), 576: (292, 0.0)}


def resolve_params(
    n_tokens: int, i: int | None = None, lam: float | None = None
) -> tuple[int, float]:
    """Fill omitted parameters from the per-token-count defaults."""
    default = SELECTION_DEFAULTS.get(n_tokens)
    if i is None:
        if default is None:
            raise ValueError(f"no default rank cutoff for {n_tokens} tokens")
        i = default[0]
    if lam is None:
        if default is None:
            raise ValueError(f"no default lambda for {n_tokens} tokens")
        lam = default[1]
    if not 0 <= i < n_tokens:
        raise ValueError(f"rank cutoff {i} outside [0, {n_tokens})")
    return int(i), float(lam)


def select_irrelevant(att1, att2, i: int, lam: float) -> tuple[int, ...]:
    """Indices passing the three-condition irrelevance rule, ascending."""
    a1 = np.asarray(att1, dtype=np.float64)
    a2 = np.asarray(att2, dtype=np.float64)
    if a1.ndim != 1 or a1.shape != a2.shape:
        raise ValueError("attention vectors must be 1-d with equal length")
    if a1.size == 0:
        raise ValueError("attention vectors are empty")
    if not (np.all(np.isfinite(a1)) and np.all(np.isfinite(a2))):
        raise ValueError("attention vectors must be finite")
    if np.any(a1 < 0.0) or np.any(a2 < 0.0):
        raise ValueError("attention scores must be nonnegative")
    if not 0 <= i < a1.size:
        raise ValueError(f"rank cutoff {i} outside [0, {a1.size})")
    change = a2 - a1
    threshold = float(np.sort(change, kind="stable")[i])
    mu = float(a1.mean())
    sigma = float(np.sqrt(np.mean((a1 - mu) ** 2)))
    bound = mu + lam * sigma
    mask = (change < 0.0) & (change < threshold) & (a1 > bound)
    return tuple(int(j) for j in np.flatnonzero(mask))
