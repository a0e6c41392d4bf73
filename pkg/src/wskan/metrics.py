"""Evaluation metrics and threshold selection."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

__all__ = ["mse", "r2", "accuracy", "roc_auc", "select_threshold"]


def _check_nonempty(*arrays):
    for arr in arrays:
        if np.asarray(arr).size == 0:
            raise ValueError("metric input is empty")


def mse(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_nonempty(pred, target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def r2(pred, target) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot.

    Multi-column targets get a per-column score averaged uniformly.
    Constant targets (SS_tot == 0) are rejected.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_nonempty(pred, target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    if pred.ndim == 1:
        pred, target = pred[:, None], target[:, None]
    ss_res = ((pred - target) ** 2).sum(axis=0)
    ss_tot = ((target - target.mean(axis=0)) ** 2).sum(axis=0)
    if np.any(ss_tot == 0):
        raise ValueError("target column is constant; R^2 undefined")
    return float(np.mean(1.0 - ss_res / ss_tot))


def accuracy(pred, target, threshold: float = 0.5) -> float:
    """Binary accuracy of thresholded scores against 0/1 targets."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target).ravel()
    _check_nonempty(pred, target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(((pred >= threshold).astype(np.int64) == target.astype(np.int64)).mean())


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the rank statistic; ties get midranks.

    Equals P(score_pos > score_neg) + 0.5 P(score_pos == score_neg) over
    random positive/negative pairs.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(np.int64)
    _check_nonempty(scores, labels)
    if scores.shape != labels.shape:
        raise ValueError(f"shape mismatch {scores.shape} vs {labels.shape}")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    ranks = rankdata(scores)  # average rank on ties
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def select_threshold(scores, labels, n_grid: int = 101) -> tuple[float, float]:
    """Pick the accuracy-maximizing threshold on a uniform [0, 1] grid.

    Returns (threshold, accuracy); ties resolve to the lowest threshold.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    _check_nonempty(scores, labels)
    best_t, best_acc = 0.0, -1.0
    for t in np.linspace(0.0, 1.0, n_grid):
        acc = accuracy(scores, labels, threshold=float(t))
        if acc > best_acc:
            best_t, best_acc = float(t), acc
    return best_t, best_acc
