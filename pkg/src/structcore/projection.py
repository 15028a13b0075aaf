"""Layer fusion and fixed-seed random projection.

Per-layer l2 normalization, channel concatenation in layer order, then a
matrix of N(0, 1/D) entries realized from a pinned PRNG pipeline
(splitmix64 -> top-53-bit uniforms -> Box-Muller) so the same spec yields
the same matrix everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError, InvariantError

_SM64_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM64_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_SM64_MUL2 = np.uint64(0x94D049BB133111EB)


@dataclass(frozen=True)
class ProjectionSpec:
    """Identifies one projection matrix: W = f(in_dim, out_dim, seed)."""

    in_dim: int
    out_dim: int
    seed: int

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise InvariantError("projection dims must be >= 1")

    def to_dict(self):
        return {"in_dim": self.in_dim, "out_dim": self.out_dim, "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(in_dim=int(d["in_dim"]), out_dim=int(d["out_dim"]), seed=int(d["seed"]))


def splitmix64(seed: int, count: int) -> np.ndarray:
    """First `count` outputs of splitmix64 seeded with `seed`, as uint64.

    splitmix64 is counter-based (state after n steps is seed + n*gamma),
    which lets the whole stream be produced vectorized.
    """
    n = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed) + n * _SM64_GAMMA
        z = (z ^ (z >> np.uint64(30))) * _SM64_MUL1
        z = (z ^ (z >> np.uint64(27))) * _SM64_MUL2
        return z ^ (z >> np.uint64(31))


def uniform_stream(seed: int, count: int) -> np.ndarray:
    """Uniforms in [0, 1) from the top 53 bits of the splitmix64 stream."""
    return (splitmix64(seed, count) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def standard_normals(seed: int, count: int) -> np.ndarray:
    """Box-Muller normals from consecutive uniform pairs.

    The radial term uses log1p(-u1), finite for u1 == 0; the cosine branch
    comes first in each pair.
    """
    pairs = (count + 1) // 2
    u = uniform_stream(seed, 2 * pairs)
    u1 = u[0::2]
    u2 = u[1::2]
    r = np.sqrt(-2.0 * np.log1p(-u1))
    theta = (2.0 * np.pi) * u2
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:count]


def realize_projection(spec: ProjectionSpec) -> np.ndarray:
    """Deterministic (in_dim, out_dim) float32 matrix with N(0, 1/D) entries.

    Normals are consumed in row-major order and scaled by 1/sqrt(out_dim)
    in f64 before the final f32 cast.
    """
    normals = standard_normals(spec.seed, spec.in_dim * spec.out_dim)
    w = normals * (1.0 / math.sqrt(spec.out_dim))
    return w.reshape(spec.in_dim, spec.out_dim).astype(np.float32)


def fuse_layers(feature_set, layer_ids=None) -> np.ndarray:
    """Per-layer l2 row normalization + channel concatenation.

    Zero rows pass through unchanged (no epsilon inflation). Output is
    (P, sum of layer dims) float32 with layers in layer_ids order. The
    optional layer_ids argument restricts fusion to a subset (pipeline
    configs may use fewer layers than a file carries).
    """
    if layer_ids is None:
        layer_ids = feature_set.layer_ids
    missing = [l for l in layer_ids if l not in feature_set.layers]
    if missing:
        raise DimensionError(f"feature set lacks layers {missing}")
    parts = []
    p_expected = None
    for layer_id in layer_ids:
        mat = feature_set.layers[layer_id]
        if p_expected is None:
            p_expected = mat.shape[0]
        elif mat.shape[0] != p_expected:
            raise DimensionError(
                f"layer {layer_id} has {mat.shape[0]} patches, expected {p_expected}"
            )
        norms = np.linalg.norm(mat.astype(np.float64), axis=1, keepdims=True)
        safe = np.where(norms > 0.0, norms, 1.0)
        parts.append((mat / safe).astype(np.float32))
    if not parts:
        raise InvariantError("feature set has no layers")
    return np.concatenate(parts, axis=1)


def project(fused: np.ndarray, spec: ProjectionSpec, w: np.ndarray | None = None) -> np.ndarray:
    """fused @ W with f64 accumulation; the result is NOT re-normalized."""
    if fused.shape[1] != spec.in_dim:
        raise DimensionError(
            f"fused width {fused.shape[1]} does not match projection in_dim {spec.in_dim}"
        )
    if w is None:
        w = realize_projection(spec)
    return kernels.matmul_f64acc(np.ascontiguousarray(fused), np.ascontiguousarray(w))
