"""Training-time evaluation metrics, computed from first principles."""

from __future__ import annotations

from .errors import DatasetError


def binary_f1(tp: int, fp: int, fn: int) -> float:
    """2TP / (2TP + FP + FN); 0 when the denominator is 0."""
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def macro_f1(y_true, y_pred) -> float:
    """Unweighted mean of per-column binary F1 over all seven columns."""
    if len(y_true) != len(y_pred) or not len(y_true):
        raise DatasetError("macro F1 needs equal-length, non-empty label arrays")
    width = len(y_true[0])
    scores = []
    for col in range(width):
        tp = fp = fn = 0
        for truth, pred in zip(y_true, y_pred):
            t, p = truth[col], pred[col]
            if p and t:
                tp += 1
            elif p and not t:
                fp += 1
            elif t and not p:
                fn += 1
        scores.append(binary_f1(tp, fp, fn))
    return sum(scores) / width


def mann_whitney_auc(labels, scores) -> float:
    """Probability a positive outranks a negative, ties counted half.

    Computed by the average-rank formulation of the Mann-Whitney U statistic:
    AUC = (R_pos - n_pos(n_pos+1)/2) / (n_pos * n_neg).
    """
    if len(labels) != len(scores) or not len(labels):
        raise DatasetError("AUC needs equal-length, non-empty inputs")
    n_pos = sum(1 for y in labels if y)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DatasetError("AUC is undefined with a single class")

    order = sorted(range(len(scores)), key=lambda i: scores[i])
    ranks = [0.0] * len(scores)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        # tied block shares the average of ranks i+1 .. j+1
        avg = (i + j + 2) / 2
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1

    rank_sum = sum(r for r, y in zip(ranks, labels) if y)
    return (rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)
