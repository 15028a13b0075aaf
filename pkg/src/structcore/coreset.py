"""Greedy farthest-point (k-center) compression of patch embedding pools.

Selection starts from index 0 with smallest-index tie-breaking, making the
whole procedure a pure function of its inputs. Distances may be computed in
a low-dimensional proxy space while the stored rows stay full-dimensional.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvariantError
from .projection import ProjectionSpec, realize_projection


@dataclass
class CoresetResult:
    selected_indices: np.ndarray  # (N_c,) int64 into the source pool
    bank: np.ndarray  # (N_c, D) float32, rows gathered from the full pool


def kcenter_select(points: np.ndarray, m: int) -> np.ndarray:
    """Indices of m greedy k-center rows of `points` (any float dtype)."""
    if points.ndim != 2 or points.shape[0] == 0:
        raise InvariantError("k-center needs a non-empty 2-D pool")
    if not 1 <= m <= points.shape[0]:
        raise InvariantError(f"cannot select {m} of {points.shape[0]} rows")
    pts = np.ascontiguousarray(points, dtype=np.float64)
    return kernels.kcenter_greedy(pts, m)


def select_coreset(
    pool: np.ndarray,
    ratio: float,
    proxy_dim: int | None = None,
    proxy_seed: int = 43,
) -> CoresetResult:
    """Compress a (T, D) pool to max(1, floor(ratio*T)) rows.

    With proxy_dim set, selection distances are taken in a second fixed
    random projection of the pool (seeded independently of the main
    projection); the returned bank rows are always the original full-D rows.
    """
    if pool.ndim != 2 or pool.shape[0] == 0:
        raise InvariantError("empty embedding pool")
    if not 0.0 < ratio <= 1.0:
        raise InvariantError(f"coreset ratio must be in (0, 1], got {ratio}")
    t = pool.shape[0]
    m = max(1, int(np.floor(ratio * t)))
    sel_space = pool
    if proxy_dim is not None and proxy_dim < pool.shape[1]:
        spec = ProjectionSpec(in_dim=pool.shape[1], out_dim=proxy_dim, seed=proxy_seed)
        w = realize_projection(spec)
        sel_space = kernels.matmul_f64acc(
            np.ascontiguousarray(pool, dtype=np.float32), w
        )
    idx = kcenter_select(sel_space, m)
    bank = np.ascontiguousarray(pool[idx], dtype=np.float32)
    return CoresetResult(selected_indices=idx, bank=bank)


def covering_radius(pool: np.ndarray, centers: np.ndarray) -> float:
    """Max over pool rows of euclidean distance to the nearest center row."""
    p = np.asarray(pool, dtype=np.float64)
    c = np.asarray(centers, dtype=np.float64)
    d2 = ((p[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2.min(axis=1).max()))
