"""Confusion-matrix rates and threshold-sweep ROC / precision-recall curves.

Anomalies are the positive class; a sample is predicted positive when its
score is >= the threshold. Counts are kept as floats so matrices can be
averaged across experiment repetitions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class CurvePoint(NamedTuple):
    x: float
    y: float


@dataclass
class ConfusionMatrix:
    tp: float
    fp: float
    fn: float
    tn: float

    @property
    def total(self) -> float:
        return self.tp + self.fp + self.fn + self.tn


def confusion(scores, labels, threshold: float) -> ConfusionMatrix:
    """Count outcomes at one threshold."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.size == 0:
        raise ValueError("empty score set")
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    pred = scores >= threshold
    actual = labels == 1
    return ConfusionMatrix(
        tp=float(np.sum(pred & actual)),
        fp=float(np.sum(pred & ~actual)),
        fn=float(np.sum(~pred & actual)),
        tn=float(np.sum(~pred & ~actual)),
    )


def tpr(cm: ConfusionMatrix) -> float:
    """True positive rate (recall); 0 when there are no positives."""
    denom = cm.tp + cm.fn
    return cm.tp / denom if denom > 0 else 0.0


def fpr(cm: ConfusionMatrix) -> float:
    """False positive rate; 0 when there are no negatives."""
    denom = cm.fp + cm.tn
    return cm.fp / denom if denom > 0 else 0.0


def ppv(cm: ConfusionMatrix) -> float:
    """Positive predictive value (precision); 0 when nothing is predicted positive."""
    denom = cm.tp + cm.fp
    return cm.tp / denom if denom > 0 else 0.0


def f1(cm: ConfusionMatrix) -> float:
    """Harmonic mean of recall and precision; 0 when both are 0."""
    r = tpr(cm)
    p = ppv(cm)
    return 2.0 * r * p / (r + p) if (r + p) > 0 else 0.0


def _sweep(scores, labels):
    """Cumulative TP/FP counts at every distinct score, descending.

    Returns (thresholds, tps, fps, n_pos, n_neg) where entry i is the result
    of predicting positive everything with score >= thresholds[i].
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(np.sum(pos))
    n_neg = int(scores.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("undefined curve: both classes must be present")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = pos[order].astype(np.int64)
    # Last index of each run of equal scores.
    bounds = np.flatnonzero(np.diff(s) != 0)
    bounds = np.append(bounds, s.size - 1)
    tps = np.cumsum(y)[bounds].astype(float)
    fps = (bounds + 1 - tps).astype(float)
    return s[bounds], tps, fps, n_pos, n_neg


def roc_curve(scores, labels) -> list[CurvePoint]:
    """ROC points (FPR, TPR) from (0, 0) to (1, 1), sorted by FPR."""
    _, tps, fps, n_pos, n_neg = _sweep(scores, labels)
    points = [CurvePoint(0.0, 0.0)]
    points.extend(
        CurvePoint(fp / n_neg, tp / n_pos) for fp, tp in zip(fps, tps)
    )
    return points


def roc_auc(scores, labels) -> float:
    """Trapezoidal area under the ROC curve."""
    pts = roc_curve(scores, labels)
    xs = np.array([p.x for p in pts])
    ys = np.array([p.y for p in pts])
    return float(np.sum(np.diff(xs) * (ys[1:] + ys[:-1]) / 2.0))


def pr_curve(scores, labels) -> list[CurvePoint]:
    """Precision-recall points (recall, precision), sorted by recall.

    The recall-0 endpoint repeats the first threshold's precision; the last
    point always has recall 1.
    """
    _, tps, fps, n_pos, _ = _sweep(scores, labels)
    recalls = tps / n_pos
    precisions = tps / (tps + fps)
    points = [CurvePoint(0.0, float(precisions[0]))]
    points.extend(CurvePoint(r, p) for r, p in zip(recalls, precisions))
    return points


def pr_auc(scores, labels) -> float:
    """Step-wise area under the precision-recall curve.

    Sums (R_i - R_{i-1}) * P_i over the descending threshold sweep, i.e.
    precision is held constant across each recall step rather than linearly
    interpolated (trapezoids overstate PR area).
    """
    _, tps, fps, n_pos, _ = _sweep(scores, labels)
    recalls = tps / n_pos
    precisions = tps / (tps + fps)
    return float(np.sum(np.diff(recalls, prepend=0.0) * precisions))


def best_threshold_by_f1(scores, labels) -> tuple[float, float]:
    """Distinct score value maximizing F1; ties resolve to the larger threshold."""
    thresholds, tps, fps, n_pos, _ = _sweep(scores, labels)
    recalls = tps / n_pos
    precisions = tps / (tps + fps)
    sums = recalls + precisions
    f1s = np.where(sums > 0, 2.0 * recalls * precisions / np.where(sums > 0, sums, 1.0), 0.0)
    best = int(np.argmax(f1s))  # thresholds descend, so the first max wins ties
    return float(thresholds[best]), float(f1s[best])


def downsample_curve(points: list[CurvePoint], max_points: int = 64) -> list[CurvePoint]:
    """Thin a curve for storage, always keeping both endpoints."""
    if len(points) <= max_points:
        return list(points)
    idx = np.unique(np.linspace(0, len(points) - 1, max_points).round().astype(int))
    return [points[i] for i in idx]
