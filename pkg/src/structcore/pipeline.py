"""End-to-end orchestration: manifests, category fitting, image scoring.

The CLI is a thin wrapper over these functions so tests can drive the
pipeline in-process.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .bundle import ModelBundle
from .config import PipelineConfig
from .coreset import select_coreset
from .errors import DimensionError, InvariantError, ProtocolError
from .features import LABEL_GOOD, PatchFeatureSet, read_feature_file
from .knn import score_patches
from .map_ops import AnomalyMap, build_map, pool_max
from .projection import ProjectionSpec, fuse_layers, project, realize_projection
from .routing import build_routing_bank, route
from .structural import fit_calibration, struct_score


@dataclass
class ManifestEntry:
    path: str
    category: str | None = None
    mask_path: str | None = None


@dataclass
class RunManifest:
    splits: dict[str, list[ManifestEntry]] = field(default_factory=dict)

    def entries(self, split: str) -> list[ManifestEntry]:
        return self.splits.get(split, [])

    def categories(self, split: str) -> list[str]:
        seen = []
        for e in self.entries(split):
            if e.category is not None and e.category not in seen:
                seen.append(e.category)
        return seen


def load_manifest(path) -> RunManifest:
    """Parse a manifest JSON; entry paths resolve relative to the file.

    Non-list values (e.g. an "_export" provenance block written by feature
    exporters) are ignored: splits are exactly the list-valued keys.
    """
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise InvariantError("manifest must be a JSON object of splits")
    splits: dict[str, list[ManifestEntry]] = {}
    for split, items in doc.items():
        if not isinstance(items, list):
            continue
        entries = []
        for item in items:
            if isinstance(item, str):
                item = {"path": item}
            p = item["path"]
            if not os.path.isabs(p):
                p = os.path.join(base, p)
            mask = item.get("mask")
            if mask is not None and not os.path.isabs(mask):
                mask = os.path.join(base, mask)
            entries.append(
                ManifestEntry(path=p, category=item.get("category"), mask_path=mask)
            )
        splits[split] = entries
    return RunManifest(splits=splits)


def embedding_width(fset: PatchFeatureSet, layer_ids) -> int:
    return sum(fset.layers[l].shape[1] for l in layer_ids)


def embed(fset: PatchFeatureSet, spec: ProjectionSpec, config: PipelineConfig,
          w: np.ndarray | None = None) -> np.ndarray:
    """fuse + project one feature set to a (P, D) float32 matrix."""
    fused = fuse_layers(fset, config.layer_ids)
    return project(fused, spec, w=w)


def fit_category(
    category_id: str,
    fsets: list[PatchFeatureSet],
    config: PipelineConfig,
    w: np.ndarray | None = None,
) -> ModelBundle:
    """Build one category's bundle from train-good feature sets.

    Enforces the one-class protocol: every input must be labeled good.
    """
    if not fsets:
        raise InvariantError(f"category {category_id}: no train files")
    for fs in fsets:
        if fs.label != LABEL_GOOD:
            raise ProtocolError(
                f"category {category_id}: train file {fs.image_id!r} is not "
                f"labeled good (one-class protocol)"
            )
    in_dim = embedding_width(fsets[0], config.layer_ids)
    spec = ProjectionSpec(in_dim=in_dim, out_dim=config.proj_out_dim, seed=config.proj_seed)
    if w is None:
        w = realize_projection(spec)
    embeddings = [embed(fs, spec, config, w=w) for fs in fsets]
    pool = np.concatenate(embeddings, axis=0)
    core = select_coreset(
        pool,
        config.coreset_ratio,
        proxy_dim=config.proxy_dim,
        proxy_seed=config.proj_seed + 1,
    )
    routing_bank = build_routing_bank(
        pool, config.routing_bank_size, category_id, seed=config.proj_seed + 1
    )
    out_h, out_w = config.output_map_size
    maps: list[AnomalyMap] = []
    base_scores: list[float] = []
    for fs, emb in zip(fsets, embeddings):
        ps = score_patches(emb, core.bank, config.knn_k, fs.grid_h, fs.grid_w)
        amap = build_map(ps, out_h, out_w, config.blur_sigma)
        maps.append(amap)
        base_scores.append(pool_max(amap))
    calib = fit_calibration(
        maps,
        base_scores,
        topk_ratio=config.topk_ratio,
        epsilon=config.epsilon,
        active_components=config.active_components,
        distance_kind=config.struct_distance_kind,
    )
    return ModelBundle(
        category_id=category_id,
        projection_spec=spec,
        memory_bank=core.bank,
        routing_bank=routing_bank,
        calibration=calib,
        pipeline_config=config,
    )


@dataclass
class ScoreResult:
    image_id: str
    routed_category: str
    route_scores: dict[str, float]
    s_base: float
    s_struct: float
    s_hyb: float
    label: str | None
    amap: AnomalyMap


def score_image(
    fset: PatchFeatureSet,
    bundles: dict[str, ModelBundle],
    forced_category: str | None = None,
    w_cache: dict | None = None,
) -> ScoreResult:
    """Route (unless forced), query the routed bank, apply structural scoring.

    Never mutates the anomaly map: the structural score is a pure reader of
    the same smoothed map the base score pools over.
    """
    if not bundles:
        raise InvariantError("no bundles loaded")
    any_bundle = next(iter(bundles.values()))
    config = any_bundle.pipeline_config
    spec = any_bundle.projection_spec
    if embedding_width(fset, config.layer_ids) != spec.in_dim:
        raise DimensionError(
            f"{fset.image_id}: fused width {embedding_width(fset, config.layer_ids)} "
            f"does not match bundle projection in_dim {spec.in_dim}"
        )
    if w_cache is not None:
        key = (spec.in_dim, spec.out_dim, spec.seed)
        if key not in w_cache:
            w_cache[key] = realize_projection(spec)
        w = w_cache[key]
    else:
        w = realize_projection(spec)
    emb = embed(fset, spec, config, w=w)
    if forced_category is not None:
        if forced_category not in bundles:
            raise ProtocolError(f"unknown category {forced_category!r}")
        routed = forced_category
        route_scores = {}
    else:
        routed, route_scores = route(emb, [b.routing_bank for b in bundles.values()])
    bundle = bundles[routed]
    ps = score_patches(emb, bundle.memory_bank, config.knn_k, fset.grid_h, fset.grid_w)
    out_h, out_w = config.output_map_size
    amap = build_map(ps, out_h, out_w, config.blur_sigma)
    s_base = pool_max(amap)
    d_struct = struct_score(amap, bundle.calibration)
    lam = (
        config.lambda_fixed
        if config.lambda_fixed is not None
        else bundle.calibration.lambda_auto
    )
    return ScoreResult(
        image_id=fset.image_id,
        routed_category=routed,
        route_scores=route_scores,
        s_base=s_base,
        s_struct=d_struct,
        s_hyb=s_base + lam * d_struct,
        label=fset.label,
        amap=amap,
    )


def load_split_feature_sets(manifest: RunManifest, split: str):
    """Read every feature file of a split, attaching manifest mask overrides."""
    out = []
    for entry in manifest.entries(split):
        fset = read_feature_file(entry.path)
        if entry.mask_path is not None:
            fset.pixel_mask = np.load(entry.mask_path)
        out.append((entry, fset))
    return out


def group_by_category(pairs):
    """Group (entry, fset) pairs by manifest category id, insertion order."""
    groups: dict[str, list[PatchFeatureSet]] = {}
    for entry, fset in pairs:
        if entry.category is None:
            raise InvariantError(f"{entry.path}: manifest entry lacks a category id")
        groups.setdefault(entry.category, []).append(fset)
    return groups
