"""structcore: memory-bank anomaly detection with structure-aware scoring.

Fits category memory banks, routing banks and structural calibration from
normal-only patch features; at inference produces anomaly maps plus base
(max-pooled), structural and hybrid image-level scores.
"""

__version__ = "0.1.0"

from .config import DISTANCE_KINDS, PHI_COMPONENTS, PipelineConfig
from .coreset import CoresetResult, select_coreset
from .features import PatchFeatureSet, read_feature_file, write_feature_file
from .bundle import ModelBundle, load_bundle, save_bundle
from .knn import PatchScores, score_patches
from .map_ops import AnomalyMap, build_map, pool_max
from .metrics import ScoredSet, auroc, average_precision, f1_max, pixel_auroc
from .projection import ProjectionSpec, fuse_layers, project, realize_projection
from .routing import RoutingBank, build_routing_bank, route
from .structural import (
    StructCalibration,
    StructDescriptor,
    describe,
    fit_calibration,
    hybrid_score,
    struct_score,
)

__all__ = [
    "AnomalyMap",
    "CoresetResult",
    "DISTANCE_KINDS",
    "ModelBundle",
    "PHI_COMPONENTS",
    "PatchFeatureSet",
    "PatchScores",
    "PipelineConfig",
    "ProjectionSpec",
    "RoutingBank",
    "ScoredSet",
    "StructCalibration",
    "StructDescriptor",
    "auroc",
    "average_precision",
    "build_map",
    "build_routing_bank",
    "describe",
    "f1_max",
    "fit_calibration",
    "fuse_layers",
    "hybrid_score",
    "load_bundle",
    "pixel_auroc",
    "pool_max",
    "project",
    "read_feature_file",
    "realize_projection",
    "route",
    "save_bundle",
    "score_patches",
    "select_coreset",
    "struct_score",
    "write_feature_file",
]
