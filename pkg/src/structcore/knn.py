"""Patch-wise kNN anomaly scoring against a memory bank.

Exact flat search: mean squared euclidean distance to the k nearest bank
rows, k clamped to the bank size so tiny banks still score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError, InvariantError


@dataclass
class PatchScores:
    scores: np.ndarray  # (P,) float32, >= 0
    grid_h: int
    grid_w: int

    def validate(self):
        if self.scores.shape != (self.grid_h * self.grid_w,):
            raise InvariantError("score length must equal grid_h*grid_w")
        if (self.scores < 0).any():
            raise InvariantError("patch scores must be non-negative")


def score_patches(queries: np.ndarray, bank: np.ndarray, k: int,
                  grid_h: int, grid_w: int) -> PatchScores:
    """kNN scores for (P, D) queries against an (N, D) bank."""
    if bank.ndim != 2 or bank.shape[0] == 0:
        raise InvariantError("empty memory bank")
    if queries.ndim != 2 or queries.shape[1] != bank.shape[1]:
        raise DimensionError(
            f"query dim {queries.shape} incompatible with bank {bank.shape}"
        )
    if k < 1:
        raise InvariantError("k must be >= 1")
    if queries.shape[0] != grid_h * grid_w:
        raise DimensionError("query count must equal grid_h*grid_w")
    q = np.ascontiguousarray(queries, dtype=np.float32)
    b = np.ascontiguousarray(bank, dtype=np.float32)
    scores = kernels.knn_mean_sqdist(q, b, k)
    return PatchScores(scores=scores.astype(np.float32), grid_h=grid_h, grid_w=grid_w)
