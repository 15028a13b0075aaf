"""Anomaly maps: grid reshape, bilinear upsampling, Gaussian smoothing,
and the max-pooled base image score.

The smoothed map is the single artifact both consumers see: max pooling for
the base score and the structural descriptor downstream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError, InvariantError
from .knn import PatchScores


@dataclass
class AnomalyMap:
    data: np.ndarray  # (H, W) float32, finite
    smoothed: bool
    source_grid: tuple[int, int]

    @property
    def shape(self):
        return self.data.shape


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D Gaussian taps with radius ceil(4*sigma), normalized to sum 1."""
    radius = int(math.ceil(4.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


def build_map(scores: PatchScores, out_h: int, out_w: int, blur_sigma: float) -> AnomalyMap:
    """Reshape row-major, upsample bilinearly, then optionally smooth.

    blur_sigma == 0 skips smoothing entirely. All intermediate arithmetic
    runs in f64; the stored map is f32.
    """
    if out_h < scores.grid_h or out_w < scores.grid_w:
        raise DimensionError("output size must be >= the patch grid")
    if out_h < 1 or out_w < 1:
        raise InvariantError("degenerate output size")
    grid = scores.scores.reshape(scores.grid_h, scores.grid_w).astype(np.float64)
    if (out_h, out_w) != grid.shape:
        grid = kernels.bilinear_upsample(grid, out_h, out_w)
    smoothed = blur_sigma > 0.0
    if smoothed:
        grid = kernels.gaussian_blur(grid, gaussian_kernel(blur_sigma))
    return AnomalyMap(
        data=grid.astype(np.float32),
        smoothed=smoothed,
        source_grid=(scores.grid_h, scores.grid_w),
    )


def pool_max(amap: AnomalyMap) -> float:
    """Base image-level score: the map maximum."""
    if not np.isfinite(amap.data).all():
        raise InvariantError("anomaly map has non-finite entries")
    return float(amap.data.max())


def export_map(amap: AnomalyMap, path_prefix: str) -> tuple[str, str]:
    """Write the raw float32 grid plus a JSON sidecar describing it."""
    raw_path = path_prefix + ".f32"
    meta_path = path_prefix + ".json"
    with open(raw_path, "wb") as fh:
        fh.write(np.ascontiguousarray(amap.data, dtype="<f4").tobytes())
    meta = {
        "height": int(amap.data.shape[0]),
        "width": int(amap.data.shape[1]),
        "dtype": "float32",
        "byte_order": "little",
        "smoothed": amap.smoothed,
        "source_grid": list(amap.source_grid),
    }
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    return raw_path, meta_path


def load_map(path_prefix: str) -> AnomalyMap:
    """Inverse of export_map."""
    with open(path_prefix + ".json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    with open(path_prefix + ".f32", "rb") as fh:
        data = np.frombuffer(fh.read(), dtype="<f4")
    data = data.reshape(meta["height"], meta["width"]).copy()
    return AnomalyMap(
        data=data,
        smoothed=bool(meta["smoothed"]),
        source_grid=tuple(meta["source_grid"]),
    )
