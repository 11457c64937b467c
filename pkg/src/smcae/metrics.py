"""Retrieval and classification metrics: F1, ROC/AUC, verification rate at a
fixed false-acceptance rate, and rank-1 nearest-neighbor accuracy.

Scores are similarities (higher = more alike); distance-based matchers negate
distances before scoring so every metric shares that convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


def f1_score(predicted, actual, average: str = "macro") -> float:
    """F1 of predictions against ground truth.

    average: "macro" (unweighted mean of per-class F1 over the classes present
    in the ground truth), "micro" (global counts) or "binary" (F1 of the
    positive class, labels {0, 1}).
    """
    predicted = np.asarray(predicted).ravel()
    actual = np.asarray(actual).ravel()
    if predicted.size == 0:
        raise ValueError("cannot score empty label vectors")
    if predicted.shape != actual.shape:
        raise ValueError(f"label vectors differ in length: "
                         f"{predicted.size} vs {actual.size}")

    def per_class(cls):
        tp = np.sum((predicted == cls) & (actual == cls))
        fp = np.sum((predicted == cls) & (actual != cls))
        fn = np.sum((predicted != cls) & (actual == cls))
        return tp, fp, fn

    if average == "binary":
        tp, fp, fn = per_class(1)
        denom = 2 * tp + fp + fn
        return float(2 * tp / denom) if denom else 0.0
    classes = np.unique(actual)
    if average == "micro":
        tp = sum(per_class(c)[0] for c in classes)
        fp = sum(per_class(c)[1] for c in classes)
        fn = sum(per_class(c)[2] for c in classes)
        denom = 2 * tp + fp + fn
        return float(2 * tp / denom) if denom else 0.0
    if average != "macro":
        raise ValueError(f"unknown averaging mode {average!r}")
    scores = []
    for c in classes:
        tp, fp, fn = per_class(c)
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def _check_scored_pairs(scores, labels):
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if labels.all() or not labels.any():
        raise ValueError("need at least one genuine and one impostor pair")
    return scores, labels


def roc_curve(scores, labels):
    """Operating points (FAR, VR) sweeping a threshold over the distinct
    scores, descending; equal scores count as one threshold. Includes the
    accept-none (0, 0) and accept-all (1, 1) endpoints."""
    scores, labels = _check_scored_pairs(scores, labels)
    n_gen = int(labels.sum())
    n_imp = int((~labels).sum())
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    l = labels[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(s):
        j = i
        while j < len(s) and s[j] == s[i]:
            tp += int(l[j])
            fp += int(~l[j])
            j += 1
        points.append((fp / n_imp, tp / n_gen))
        i = j
    return points


def roc_and_auc(scores, labels):
    """ROC operating points plus the trapezoid-rule area under the curve."""
    points = roc_curve(scores, labels)
    fars = np.array([p[0] for p in points])
    vrs = np.array([p[1] for p in points])
    auc = float(np.trapezoid(vrs, fars))
    return points, auc


def vr_at_far(scores, labels, far: float = 0.001) -> float:
    """Best achievable verification rate subject to FAR <= far, reading the
    achieved operating points without interpolation."""
    points = roc_curve(scores, labels)
    feasible = [vr for f, vr in points if f <= far]
    return float(max(feasible)) if feasible else 0.0


def rank1(queries, gallery, ground_truth) -> float:
    """Fraction of queries whose Euclidean-nearest gallery row is their true
    mate; distance ties resolve to the lowest gallery index."""
    queries = np.asarray(queries, dtype=float)
    gallery = np.asarray(gallery, dtype=float)
    if gallery.size == 0:
        raise ValueError("gallery is empty")
    truth = np.asarray(ground_truth, dtype=int).ravel()
    if truth.size != queries.shape[0]:
        raise ValueError("need one true-mate index per query")
    g2 = np.sum(gallery ** 2, axis=1)
    hits = 0
    for i, q in enumerate(queries):
        d2 = np.maximum(g2 - 2.0 * (gallery @ q) + float(q @ q), 0.0)
        hits += int(np.argmin(d2)) == int(truth[i])
    return hits / queries.shape[0]


@dataclass
class MetricReport:
    """Bundle of whichever metrics an evaluation produced."""

    f1: float | None = None
    auc: float | None = None
    vr_far: float | None = None
    far: float | None = None
    rank1: float | None = None
    roc: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {}
        for key in ("f1", "auc", "vr_far", "far", "rank1"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.roc:
            out["roc"] = [[float(a), float(b)] for a, b in self.roc]
        out.update(self.extra)
        return out

    def to_text(self) -> str:
        """Flat key-value lines; the ROC curve is elided down to its size."""
        lines = []
        for key, value in self.to_dict().items():
            if key == "roc":
                lines.append(f"roc_points {len(value)}")
            else:
                lines.append(f"{key} {value!r}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
