"""Multi-category binding via per-category prototype banks.

Embeddings are l2-normalized for routing; each input goes to the category
with the smallest mean nearest-prototype squared distance. Prototypes are
picked by the same greedy k-center primitive used for the memory bank, on
the normalized pool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .coreset import kcenter_select
from .errors import InvariantError

_UNIT_TOL = 1e-5


@dataclass
class RoutingBank:
    category_id: str
    prototypes: np.ndarray  # (K_r, D) float32, unit rows

    def validate(self):
        if self.prototypes.ndim != 2 or self.prototypes.shape[0] == 0:
            raise InvariantError("routing bank must have at least one prototype")
        norms = np.linalg.norm(self.prototypes.astype(np.float64), axis=1)
        if np.abs(norms - 1.0).max() > _UNIT_TOL:
            raise InvariantError("routing bank rows must be unit-norm")


def _normalize_rows(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit-normalize rows; returns (normalized f32, nonzero-row mask)."""
    norms = np.linalg.norm(mat.astype(np.float64), axis=1, keepdims=True)
    nonzero = norms[:, 0] > 0.0
    safe = np.where(nonzero[:, None], norms, 1.0)
    return (mat / safe).astype(np.float32), nonzero


def build_routing_bank(pool: np.ndarray, k_r: int, category_id: str,
                       seed: int = 0, proxy_dim: int | None = None) -> RoutingBank:
    """Greedy k-center selection of min(k_r, usable rows) unit prototypes.

    Zero rows are dropped before normalization. `seed` only matters when a
    proxy selection space is requested; full-D selection is deterministic
    on its own.
    """
    if pool.ndim != 2 or pool.shape[0] == 0:
        raise InvariantError("empty routing pool")
    normed, nonzero = _normalize_rows(pool)
    normed = normed[nonzero]
    if normed.shape[0] == 0:
        raise InvariantError("routing pool has only zero rows")
    m = min(k_r, normed.shape[0])
    sel_space = normed
    if proxy_dim is not None and proxy_dim < normed.shape[1]:
        from .projection import ProjectionSpec, realize_projection

        w = realize_projection(ProjectionSpec(normed.shape[1], proxy_dim, seed))
        sel_space = kernels.matmul_f64acc(normed, w)
    idx = kcenter_select(sel_space, m)
    bank = RoutingBank(category_id=category_id, prototypes=normed[idx].copy())
    bank.validate()
    return bank


def route(patches: np.ndarray, banks: list[RoutingBank]) -> tuple[str, dict[str, float]]:
    """Bind patch embeddings to one category.

    Returns (category id with minimal mean nearest-prototype squared
    distance, full per-category score map). Ties break to the smallest
    category id.
    """
    if not banks:
        raise InvariantError("need at least one routing bank")
    if patches.ndim != 2 or patches.shape[0] == 0:
        raise InvariantError("empty patch matrix")
    normed, _ = _normalize_rows(patches)
    normed = np.ascontiguousarray(normed)
    scores: dict[str, float] = {}
    for bank in banks:
        scores[bank.category_id] = kernels.routing_mean_min_sqdist(
            normed, np.ascontiguousarray(bank.prototypes)
        )
    best = min(scores, key=lambda cid: (scores[cid], cid))
    return best, scores
