"""Evaluation metrics: R², AUROC (rank statistic) and accuracy."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class UndefinedMetricError(ValueError):
    """The metric has no value for the given targets."""


def r2_score(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    ss_res = np.sum((y_true - y_pred) ** 2)
    ss_tot = np.sum((y_true - y_true.mean()) ** 2)
    if ss_tot == 0:
        raise UndefinedMetricError("R² is undefined for constant targets")
    return float(1.0 - ss_res / ss_tot)


def auroc(labels, scores) -> float:
    """Mann-Whitney form: probability a positive outscores a negative, ties count half."""
    labels = np.asarray(labels).ravel().astype(bool)
    scores = np.asarray(scores, dtype=np.float64).ravel()
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both classes present")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def accuracy(labels, predicted) -> float:
    labels = np.asarray(labels).ravel()
    predicted = np.asarray(predicted).ravel()
    if labels.size == 0:
        raise UndefinedMetricError("accuracy of an empty set")
    return float(np.mean(labels == predicted))
