"""Binary classification metrics: F1 at a fixed threshold and rank-based AUC."""

from __future__ import annotations

import numpy as np


class DegenerateLabels(ValueError):
    """AUC is undefined when only one class is present."""


def f1_score(predictions, labels) -> float:
    """F1 = 2TP / (2TP + FP + FN); zero when there are no positives at all."""
    predictions = np.asarray(predictions).astype(bool)
    labels = np.asarray(labels).astype(bool)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise ValueError("predictions and labels must be nonempty and aligned")
    tp = int(np.sum(predictions & labels))
    fp = int(np.sum(predictions & ~labels))
    fn = int(np.sum(~predictions & labels))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def auc_score(scores, labels) -> float:
    """Mann-Whitney AUC with tied scores assigned averaged ranks."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.size == 0:
        raise ValueError("scores and labels must be nonempty and aligned")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUC needs both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    rank_sum = float(ranks[labels].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
