"""Numpy implementations of the hot numeric kernels.

These are the fallback for iava._kernels_c and the reference its parity
tests compare against.  All functions assume validated float64 input;
argument checking lives in the calling modules.
"""

from __future__ import annotations

import numpy as np

BACKEND = "py"


def stats(att1: np.ndarray) -> tuple[float, float]:
    """Mean and population standard deviation (divisor = length)."""
    mu = float(att1.mean())
    var = float(np.mean((att1 - mu) ** 2))
    return mu, float(np.sqrt(var))


def delta(att1: np.ndarray, att2: np.ndarray) -> np.ndarray:
    return att2 - att1


def select(att1: np.ndarray, att2: np.ndarray, i: int, lam: float) -> np.ndarray:
    """Indices passing the three-condition irrelevance rule, ascending.

    A token j is selected when its attention change is strictly negative,
    strictly below the i-th smallest change, and its first-pass attention
    strictly exceeds mu + lam * sigma.
    """
    d = att2 - att1
    threshold = float(np.sort(d, kind="stable")[i])
    mu, sigma = stats(att1)
    bound = mu + lam * sigma
    mask = (d < 0.0) & (d < threshold) & (att1 > bound)
    return np.flatnonzero(mask).astype(np.int64)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def contrastive(base: np.ndarray, negative: np.ndarray, alpha: float) -> np.ndarray:
    """softmax((1 + alpha) * log_softmax(base) - alpha * log_softmax(negative))."""
    combined = (1.0 + alpha) * log_softmax(base) - alpha * log_softmax(negative)
    shifted = np.exp(combined - combined.max())
    return shifted / shifted.sum()
