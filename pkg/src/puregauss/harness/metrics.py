"""Utility metrics for offline and online selection."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from puregauss.errors import DomainError
from puregauss.mechanisms import QueryVector


def accuracy_metric(values: QueryVector, selected: int) -> float:
    """One-trial accuracy ``1 - |q_best - q_selected|`` (``q_max = 1``).

    ``selected`` is 1-based. Averaging over trials gives the expected
    accuracy reported by the offline runner.
    """
    if not 1 <= selected <= values.d:
        raise DomainError(f"selected index {selected} outside 1..{values.d}")
    best = values.values.max()
    return 1.0 - abs(best - values.values[selected - 1])


def f1_score(predicted: Sequence[int], truth: Sequence[int]) -> float:
    """Binary F1. When neither vector has a positive the score is 1."""
    p = np.asarray(predicted, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    if p.shape != t.shape:
        raise DomainError(f"length mismatch: {p.shape} vs {t.shape}")
    tp = int(np.sum(p & t))
    n_pred, n_true = int(p.sum()), int(t.sum())
    if n_pred == 0 and n_true == 0:
        return 1.0
    if tp == 0:
        return 0.0
    precision = tp / n_pred
    recall = tp / n_true
    return 2.0 * precision * recall / (precision + recall)


def ground_truth_vector(values: Sequence[float], rho: float) -> np.ndarray:
    """Noiseless Above Threshold with restarts after each hit.

    Without noise every restart fires at the next value at or above ``rho``,
    so the transcript reduces to a threshold indicator.
    """
    return (np.asarray(values, dtype=float) >= rho).astype(np.int8)
