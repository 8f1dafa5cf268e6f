"""Accuracy and fidelity metrics for latency estimates and fusion predictions."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.stats import rankdata


class UndefinedMetricError(ValueError):
    pass


def _pairs(measured, estimated, percentage=False):
    m = np.asarray(measured, dtype=float)
    e = np.asarray(estimated, dtype=float)
    if m.shape != e.shape or m.ndim != 1 or len(m) == 0:
        raise ValueError("need equally long, non-empty measured/estimated sequences")
    if percentage and np.any(m == 0):
        raise ValueError("percentage metrics need non-zero measured values")
    return m, e


def _weights(m, weighted):
    return m / m.sum() if weighted else np.full(len(m), 1.0 / len(m))


def metric_mae(measured, estimated) -> float:
    m, e = _pairs(measured, estimated)
    return float(np.mean(np.abs(e - m)))


def metric_mape(measured, estimated, weighted: bool = False) -> float:
    """Mean absolute percentage error; ``weighted`` weights pairs by measured time."""
    m, e = _pairs(measured, estimated, True)
    return float(np.sum(_weights(m, weighted) * np.abs(e - m) / m) * 100.0)


def metric_rmspe(measured, estimated, weighted: bool = False) -> float:
    m, e = _pairs(measured, estimated, True)
    return float(math.sqrt(np.sum(_weights(m, weighted) * ((e - m) / m) ** 2)) * 100.0)


def metric_spearman(measured, estimated) -> float:
    """Spearman's rank correlation with average ranks for ties."""
    m, e = _pairs(measured, estimated)
    if len(m) < 2:
        raise UndefinedMetricError("Spearman's rho needs at least two pairs")
    rm, re = rankdata(m), rankdata(e)
    if np.all(rm == rm[0]) or np.all(re == re[0]):
        raise UndefinedMetricError("Spearman's rho is undefined for constant inputs")
    rm -= rm.mean()
    re -= re.mean()
    rho = float(np.sum(rm * re) / math.sqrt(np.sum(rm * rm) * np.sum(re * re)))
    return max(-1.0, min(1.0, rho))


def confusion(actual: Sequence[bool], predicted: Sequence[bool]) -> tuple[int, int, int, int]:
    """(TP, FP, FN, TN)."""
    a = np.asarray(actual, dtype=bool)
    p = np.asarray(predicted, dtype=bool)
    return int(np.sum(a & p)), int(np.sum(~a & p)), int(np.sum(a & ~p)), int(np.sum(~a & ~p))


def metric_f1(tp: int, fp: int, fn: int, tn: int) -> float:
    if tp + fp + fn + tn <= 0:
        raise ValueError("empty confusion matrix")
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def metric_mcc(tp: int, fp: int, fn: int, tn: int) -> float:
    """Matthews correlation coefficient; 0 when a marginal is empty (see ``mcc_defined``)."""
    if tp + fp + fn + tn <= 0:
        raise ValueError("empty confusion matrix")
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def mcc_defined(tp: int, fp: int, fn: int, tn: int) -> bool:
    return (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn) != 0
