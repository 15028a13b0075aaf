"""Synthetic feature fixtures.

Two generators built around a tight feature cluster per category:

* structgap: every image carries one extreme off-cluster patch ("spike") of
  the same magnitude, so max pooling barely separates the classes; the
  anomalous images additionally get a broad block of moderately rotated
  patches that raises map dispersion and roughness but never the max.
* routing: several categories with mutually orthogonal anchors, cleanly
  separable in normalized embedding space.

Generated files are ordinary "SCFT" feature files plus a manifest and a
suggested pipeline config, so the fixtures run through the stock CLI.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .features import LABEL_ANOMALOUS, LABEL_GOOD, PatchFeatureSet, write_feature_file

STRUCTGAP_DEFAULTS = dict(
    category="widget",
    n_train=20,
    n_test_normal=100,
    n_test_anomalous=100,
    grid=16,
    feat_dim=24,
    layer_id=-1,
    jitter=0.05,
    spike_angle_deg=90.0,
    region_angle_deg=35.0,
    region_size=6,
)

ROUTING_DEFAULTS = dict(
    categories=("cat_a", "cat_b", "cat_c"),
    n_train=10,
    n_test_normal=8,
    n_test_anomalous=4,
    grid=16,
    feat_dim=24,
    layer_id=-1,
    jitter=0.05,
    spike_angle_deg=90.0,
    region_angle_deg=35.0,
    region_size=6,
)


def structgap_pipeline_config(grid: int = 16, seed: int = 42) -> PipelineConfig:
    return PipelineConfig(
        layer_ids=(-1,),
        proj_out_dim=16,
        proj_seed=seed,
        coreset_ratio=0.05,
        knn_k=5,
        blur_sigma=0.0,
        topk_ratio=0.01,
        routing_bank_size=16,
        output_map_size=(grid, grid),
    )


def _rotated(anchor: np.ndarray, angle_rad: float, rng) -> np.ndarray:
    """Unit vector at a fixed angle from `anchor`, random azimuth."""
    u = rng.standard_normal(anchor.shape[0])
    u -= (u @ anchor) * anchor
    u /= np.linalg.norm(u)
    return np.cos(angle_rad) * anchor + np.sin(angle_rad) * u


@dataclass
class _ImageSpec:
    label: str
    with_region: bool


def _gen_image(
    image_id: str,
    spec: _ImageSpec,
    anchor: np.ndarray,
    params: dict,
    rng,
    layer_id: int,
) -> PatchFeatureSet:
    g = params["grid"]
    d = params["feat_dim"]
    jitter = params["jitter"]
    feats = np.tile(anchor, (g * g, 1))
    mask = np.zeros((g, g), dtype=np.uint8)
    if spec.with_region:
        r = params["region_size"]
        top = rng.integers(0, g - r + 1)
        left = rng.integers(0, g - r + 1)
        angle = np.deg2rad(params["region_angle_deg"])
        for i in range(top, top + r):
            for j in range(left, left + r):
                feats[i * g + j] = _rotated(anchor, angle, rng)
        mask[top : top + r, left : left + r] = 1
    spike_pos = int(rng.integers(0, g * g))
    feats[spike_pos] = _rotated(anchor, np.deg2rad(params["spike_angle_deg"]), rng)
    feats = feats + jitter * rng.standard_normal((g * g, d))
    return PatchFeatureSet(
        image_id=image_id,
        layer_ids=[layer_id],
        layers={layer_id: feats.astype(np.float32)},
        grid_h=g,
        grid_w=g,
        label=spec.label,
        pixel_mask=mask,
    )


def _write_category(out_dir, category, anchor, params, rng, manifest):
    layer_id = params["layer_id"]
    for i in range(params["n_train"]):
        fid = f"{category}_train_{i:03d}"
        fset = _gen_image(fid, _ImageSpec(LABEL_GOOD, False), anchor, params, rng, layer_id)
        fset.pixel_mask = None  # train files carry no masks
        path = os.path.join(out_dir, fid + ".scft")
        write_feature_file(fset, path)
        manifest["train"].append({"path": os.path.basename(path), "category": category})
    cases = [(LABEL_GOOD, False, "good", params["n_test_normal"]),
             (LABEL_ANOMALOUS, True, "anom", params["n_test_anomalous"])]
    for label, with_region, tag, count in cases:
        for i in range(count):
            fid = f"{category}_test_{tag}_{i:03d}"
            fset = _gen_image(fid, _ImageSpec(label, with_region), anchor, params, rng, layer_id)
            path = os.path.join(out_dir, fid + ".scft")
            write_feature_file(fset, path)
            manifest["test"].append({"path": os.path.basename(path), "category": category})


def generate_structgap(out_dir, seed: int = 42, **overrides) -> dict:
    """Write the structural-gap fixture; returns summary metadata."""
    params = dict(STRUCTGAP_DEFAULTS)
    params.update(overrides)
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    anchor = np.zeros(params["feat_dim"])
    anchor[0] = 1.0
    manifest: dict = {"train": [], "test": []}
    _write_category(out_dir, params["category"], anchor, params, rng, manifest)
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    config = structgap_pipeline_config(params["grid"], seed=42)
    config_path = os.path.join(out_dir, "pipeline_config.json")
    with open(config_path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")
    return {
        "mode": "structgap",
        "seed": seed,
        "params": params,
        "manifest": manifest_path,
        "pipeline_config": config_path,
    }


def generate_routing(out_dir, seed: int = 42, **overrides) -> dict:
    """Write the multi-category routing fixture (orthogonal anchors)."""
    params = dict(ROUTING_DEFAULTS)
    params.update(overrides)
    categories = list(params["categories"])
    if len(categories) > params["feat_dim"]:
        raise ValueError("need feat_dim >= number of categories")
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    manifest: dict = {"train": [], "test": []}
    for idx, category in enumerate(categories):
        anchor = np.zeros(params["feat_dim"])
        anchor[idx] = 1.0
        _write_category(out_dir, category, anchor, params, rng, manifest)
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    config = structgap_pipeline_config(params["grid"], seed=42)
    config = config.replace(routing_bank_size=8)
    config_path = os.path.join(out_dir, "pipeline_config.json")
    with open(config_path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")
    return {
        "mode": "routing",
        "seed": seed,
        "params": params,
        "manifest": manifest_path,
        "pipeline_config": config_path,
    }
