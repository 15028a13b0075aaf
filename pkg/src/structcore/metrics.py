"""Ranking metrics with exact tie handling.

AUROC uses the Mann-Whitney midrank formulation; AP and F1-max sweep the
descending distinct scores with tied scores entering together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvariantError, MetricUndefinedError


@dataclass
class ScoredSet:
    scores: np.ndarray  # float
    labels: np.ndarray  # {0, 1}, 1 = anomalous

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise InvariantError("scores and labels must be aligned 1-D vectors")
        if self.scores.size == 0:
            raise InvariantError("empty scored set")
        if not np.isfinite(self.scores).all():
            raise InvariantError("scores must be finite")
        if not np.isin(self.labels, (0, 1)).all():
            raise InvariantError("labels must be binary")

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return int(self.labels.size - self.labels.sum())


def _midranks(scores: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties assigned the mean rank of their group."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(sset: ScoredSet) -> float:
    """Image-level AUROC via rank sums; ties count half."""
    n_pos, n_neg = sset.n_pos, sset.n_neg
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("AUROC undefined without both classes")
    ranks = _midranks(sset.scores)
    rank_sum = ranks[sset.labels == 1].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _descending_groups(sset: ScoredSet):
    """Cumulative (tp, fp) after each distinct score group, descending."""
    order = np.argsort(-sset.scores, kind="stable")
    scores = sset.scores[order]
    labels = sset.labels[order]
    tp = np.cumsum(labels == 1)
    fp = np.cumsum(labels == 0)
    # keep only the last index of each tied group
    last = np.nonzero(np.append(scores[1:] != scores[:-1], True))[0]
    return tp[last], fp[last]


def average_precision(sset: ScoredSet) -> float:
    """AP = sum over groups of (recall step) * precision, ties grouped."""
    n_pos = sset.n_pos
    if n_pos == 0:
        raise MetricUndefinedError("AP undefined without positives")
    tp, fp = _descending_groups(sset)
    recall = tp / n_pos
    precision = tp / (tp + fp)
    prev = np.concatenate(([0.0], recall[:-1]))
    # fsum: exact summation, independent of term grouping
    return math.fsum((recall - prev) * precision)


def f1_max(sset: ScoredSet) -> float:
    """Best F1 over thresholds at each distinct score (predict when >= t)."""
    if sset.n_pos == 0:
        raise MetricUndefinedError("F1 undefined without positives")
    tp, fp = _descending_groups(sset)
    precision = tp / (tp + fp)
    recall = tp / sset.n_pos
    denom = precision + recall
    f1 = np.where(denom > 0, 2.0 * precision * recall / np.where(denom > 0, denom, 1.0), 0.0)
    return float(f1.max())


def pixel_auroc(maps, masks) -> float:
    """AUROC over all pixels of all images pooled into one set."""
    if len(maps) != len(masks) or not maps:
        raise DimensionError("maps and masks must align")
    scores = []
    labels = []
    for amap, mask in zip(maps, masks):
        data = amap.data if hasattr(amap, "data") else np.asarray(amap)
        mask = np.asarray(mask)
        if data.shape != mask.shape:
            raise DimensionError(
                f"map shape {data.shape} does not match mask shape {mask.shape}"
            )
        scores.append(np.asarray(data, dtype=np.float64).ravel())
        labels.append(mask.astype(np.int64).ravel())
    pooled = ScoredSet(np.concatenate(scores), np.concatenate(labels))
    return auroc(pooled)
