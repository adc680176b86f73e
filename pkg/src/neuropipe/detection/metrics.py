"""Evaluation metrics."""
from __future__ import annotations

import numpy as np

from .. import NeuropipeError


class MetricError(NeuropipeError, ValueError):
    pass


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p, t = np.asarray(pred), np.asarray(truth)
    if p.shape != t.shape or p.ndim != 1:
        raise MetricError(f"length mismatch: {p.size} predictions vs {t.size} truths")
    return p, t


def _f1(p, t, c) -> float:
    tp = np.sum((p == c) & (t == c))
    fp = np.sum((p == c) & (t != c))
    fn = np.sum((p != c) & (t == c))
    den = 2 * tp + fp + fn
    return float(2 * tp / den) if den else 0.0


def f1_score(pred, truth, averaging: str = "macro", positive=None) -> float:
    """Binary F1 for ``positive`` or macro F1 over classes present in either vector."""
    p, t = _pair(pred, truth)
    if averaging == "binary":
        if positive is None:
            raise MetricError("binary F1 needs a designated positive class")
        if len(set(p.tolist()) | set(t.tolist()) | {positive}) > 2:
            raise MetricError("binary F1 needs exactly 2 classes")
        return _f1(p, t, positive)
    if averaging != "macro":
        raise MetricError(f"unknown averaging {averaging!r}")
    classes = sorted(set(p.tolist()) | set(t.tolist()))
    if not classes:
        return 0.0
    return float(np.mean([_f1(p, t, c) for c in classes]))


def rmse(pred, truth) -> float:
    p, t = _pair(np.asarray(pred, float), np.asarray(truth, float))
    if p.size == 0:
        raise MetricError("RMSE of empty vectors")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def confusion_matrix(pred, truth, classes) -> np.ndarray:
    """Counts with truth along rows and predictions along columns."""
    p, t = _pair(pred, truth)
    idx = {c: i for i, c in enumerate(classes)}
    m = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for a, b in zip(t.tolist(), p.tolist()):
        m[idx[a], idx[b]] += 1
    return m
