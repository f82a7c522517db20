"""Estimation, prediction and selection quality measures."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import LengthMismatch, OutOfRangeIndex
from .model import Dataset, GlmFamily


class SelectionMetrics(NamedTuple):
    tpr: float
    fdr: float
    mcc: float


def estimation_error(beta_hat, beta_true) -> float:
    """Euclidean distance between estimated and true coefficients."""
    a = np.asarray(beta_hat, dtype=float).reshape(-1)
    b = np.asarray(beta_true, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    return float(np.linalg.norm(a - b))


def prediction_error(beta_hat, test: Dataset, family) -> float:
    """Mean squared error (Gaussian) or misclassification rate at cutoff 0.5.

    A predicted probability of exactly 0.5 is classified as 0.
    """
    beta = np.asarray(beta_hat, dtype=float).reshape(-1)
    if beta.size != test.p:
        raise LengthMismatch(f"beta has {beta.size} entries, test data has {test.p} columns")
    eta = test.X @ beta
    if GlmFamily.parse(family) is GlmFamily.GAUSSIAN:
        return float(np.mean((test.y - eta) ** 2))
    # eta > 0 is exactly probability > 0.5
    predicted = (eta > 0.0).astype(float)
    return float(np.mean(predicted != test.y))


def selection_metrics(selected, truth, p: int) -> SelectionMetrics:
    """True-positive rate, false-discovery rate and Matthews correlation.

    Conventions: FDR is 0 when nothing is selected; TPR is 1 when the truth
    is empty; MCC is 1 for a perfect match and 0 when any factor of its
    denominator vanishes otherwise.
    """
    sel, tru = set(int(j) for j in selected), set(int(j) for j in truth)
    for j in sel | tru:
        if not 0 <= j < p:
            raise OutOfRangeIndex(f"index {j} outside 0..{p - 1}")
    tp = len(sel & tru)
    fp = len(sel - tru)
    fn = len(tru - sel)
    tn = p - tp - fp - fn
    tpr = tp / len(tru) if tru else 1.0
    fdr = fp / len(sel) if sel else 0.0
    if fp == 0 and fn == 0:
        return SelectionMetrics(tpr, fdr, 1.0)
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = (tp * tn - fp * fn) / math.sqrt(denom) if denom else 0.0
    return SelectionMetrics(tpr, fdr, mcc)
