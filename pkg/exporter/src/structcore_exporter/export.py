"""Run a frozen backbone over dataset images and write SCFT feature files.

Tokens are exported raw (no l2 normalization; that belongs to the scoring
pipeline), CLS excluded, row-major over the spatial grid. Ground-truth
masks ride along inside the feature files after the same resize/crop
geometry, so pixel metrics line up with maps rendered at crop resolution.
"""

from __future__ import annotations

import json
import os

import numpy as np
import torch

from structcore.features import PatchFeatureSet, write_feature_file

from .config import ExportConfig
from .layout import ImageRecord, scan_dataset
from .preprocess import load_image_tensor, load_mask


def export_records(
    records: list[ImageRecord],
    backbone,
    config: ExportConfig,
    out_dir,
) -> dict:
    """Export feature files for `records`; returns the manifest document."""
    if config.patch_size != backbone.patch_size:
        raise ValueError(
            f"config patch size {config.patch_size} != backbone {backbone.patch_size}"
        )
    grid = config.grid
    expected_p = grid * grid
    manifest = {"train": [], "test": []}
    os.makedirs(out_dir, exist_ok=True)
    for lo in range(0, len(records), config.batch_size):
        batch = records[lo : lo + config.batch_size]
        images = torch.stack(
            [load_image_tensor(r.image_path, config) for r in batch]
        ).to(config.device)
        with torch.no_grad():
            layer_tokens = backbone.tokens(images, config.layer_ids)
        for mats in layer_tokens:
            if mats.shape[1] != expected_p:
                raise ValueError(
                    f"backbone produced {mats.shape[1]} tokens, expected "
                    f"{expected_p} for a {grid}x{grid} grid"
                )
        for bi, rec in enumerate(batch):
            layers = {
                lid: layer_tokens[li][bi].cpu().numpy().astype(np.float32)
                for li, lid in enumerate(config.layer_ids)
            }
            mask = load_mask(rec.mask_path, config) if rec.mask_path else None
            fset = PatchFeatureSet(
                image_id=rec.image_id,
                layer_ids=list(config.layer_ids),
                layers=layers,
                grid_h=grid,
                grid_w=grid,
                label=rec.label,
                pixel_mask=mask,
            )
            cat_dir = os.path.join(out_dir, rec.category)
            os.makedirs(cat_dir, exist_ok=True)
            fname = os.path.join(rec.category, rec.image_id + ".scft")
            write_feature_file(fset, os.path.join(out_dir, fname))
            manifest[rec.split].append({"path": fname, "category": rec.category})
    return manifest


def export_dataset(dataset_root, backbone, config: ExportConfig, out_dir,
                   categories=None, limit=None) -> dict:
    """Scan a dataset tree, export everything, and write the manifest."""
    records = scan_dataset(dataset_root, config.layout, categories)
    if limit is not None:
        records = records[:limit]
    manifest = export_records(records, backbone, config, out_dir)
    manifest["_export"] = {
        "layout": config.layout,
        "resize": config.resize,
        "crop": config.crop,
        "interpolation": config.interpolation,
        "patch_size": config.patch_size,
        "grid": [config.grid, config.grid],
        "layer_ids": list(config.layer_ids),
        "normalization": "imagenet",
        "token_order": "row-major",
        "cls_token": "excluded",
        "images": len(records),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest
