"""Evaluation metrics: top-1 accuracy and rank-based AUC."""

from __future__ import annotations

import numpy as np

from .errors import AucUndefinedError


def top1_accuracy(label_dists: np.ndarray, labels0: np.ndarray) -> float:
    """Mean argmax-match over rows; ties break toward the lowest class index.

    labels0 are 0-based true labels.
    """
    preds = np.argmax(label_dists, axis=1)
    return float(np.mean(preds == labels0))


def auc(scores, labels) -> float:
    """Mann-Whitney rank AUC; tied scores count 0.5 per tied pair."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise AucUndefinedError("AUC needs at least one positive and one negative")
    ranks = _average_ranks(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the average rank of their group."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    sx = x[order]
    i = 0
    while i < len(sx):
        j = i
        while j + 1 < len(sx) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks
