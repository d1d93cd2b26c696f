"""Per-pair confidence weights over the demonstration set."""

from __future__ import annotations

import numpy as np


class DegenerateConfidenceError(ValueError):
    """All confidences are zero, so the demo distribution is undefined."""


def init_confidence(n_pairs: int) -> np.ndarray:
    if n_pairs < 1:
        raise ValueError("need at least one demonstrated pair")
    return np.ones(n_pairs)


def normalized_weights(beta: np.ndarray, batch_indices=None) -> np.ndarray:
    """``n * beta_i / sum(beta)`` over the full table, read at ``batch_indices``."""
    beta = np.asarray(beta, dtype=float)
    total = beta.sum()
    if not total > 0:
        raise DegenerateConfidenceError(f"confidence sum is {total}; cannot normalize")
    w = beta * (len(beta) / total)
    return w if batch_indices is None else w[batch_indices]


def project(beta: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(beta, dtype=float), 0.0)


def format_confidence(beta: np.ndarray) -> str:
    return "".join(f"{float(b)!r}\n" for b in beta)


def parse_confidence(text: str) -> np.ndarray:
    return np.array([float(x) for x in text.split()])


def level_means(beta: np.ndarray, pair_level: np.ndarray) -> dict[int, float]:
    return {int(lv): float(beta[pair_level == lv].mean()) for lv in np.unique(pair_level)}
