"""Evaluation metrics."""

import numpy as np
from scipy.stats import rankdata


def rmse(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"shape mismatch {y_true.shape} vs {y_pred.shape}")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


def auc(y_true, y_score) -> float:
    """Area under the ROC curve via the rank-sum statistic with midranks for ties."""
    y_true = np.asarray(y_true).astype(int).ravel()
    y_score = np.asarray(y_score, dtype=np.float64).ravel()
    if y_true.shape != y_score.shape:
        raise ValueError("labels and scores differ in length")
    n_pos = int(y_true.sum())
    n_neg = y_true.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = rankdata(y_score)  # average ranks
    return float((ranks[y_true == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auc_trapezoid(y_true, y_score) -> float:
    """Same quantity by sweeping thresholds; ties move the curve diagonally."""
    y_true = np.asarray(y_true).astype(int).ravel()
    y_score = np.asarray(y_score, dtype=np.float64).ravel()
    order = np.argsort(-y_score, kind="stable")
    s, y = y_score[order], y_true[order]
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.r_[0, np.cumsum(y)[last]]
    fp = np.r_[0, np.cumsum(1 - y)[last]]
    return float(np.trapezoid(tp / tp[-1], fp / fp[-1]))
