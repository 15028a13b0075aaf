"""Pipeline configuration with the default operating point.

Defaults: skip-layer set [-1,-3,-6,-9,-12], random projection to D=512 with
seed 42, 1% coreset, kNN k=5, Gaussian blur sigma=4, top-k ratio 1%, routing
bank size 64, diagonal-Mahalanobis structural distance.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import InvariantError

DISTANCE_KINDS = (
    "diag-mahalanobis",
    "l1-std",
    "chebyshev-std",
    "manhattan",
    "euclidean",
    "chebyshev",
    "cosine",
)

PHI_COMPONENTS = ("sigma", "topk", "tv")

DEFAULT_LAYER_IDS = (-1, -3, -6, -9, -12)


@dataclass
class PipelineConfig:
    layer_ids: tuple[int, ...] = DEFAULT_LAYER_IDS
    proj_out_dim: int = 512
    proj_seed: int = 42
    coreset_ratio: float = 0.01
    knn_k: int = 5
    blur_sigma: float = 4.0
    topk_ratio: float = 0.01
    routing_bank_size: int = 64
    struct_distance_kind: str = "diag-mahalanobis"
    epsilon: float = 1e-8
    output_map_size: tuple[int, int] = (392, 392)
    proxy_dim: int | None = None
    active_components: tuple[str, ...] = PHI_COMPONENTS
    lambda_fixed: float | None = None

    def __post_init__(self):
        self.layer_ids = tuple(int(l) for l in self.layer_ids)
        self.output_map_size = tuple(int(v) for v in self.output_map_size)
        self.active_components = tuple(self.active_components)
        self.validate()

    def validate(self):
        if not self.layer_ids:
            raise InvariantError("layer_ids must be non-empty")
        if len(set(self.layer_ids)) != len(self.layer_ids):
            raise InvariantError("layer_ids must be unique")
        if not 0.0 < self.coreset_ratio <= 1.0:
            raise InvariantError(f"coreset_ratio must be in (0, 1], got {self.coreset_ratio}")
        if not 0.0 < self.topk_ratio <= 1.0:
            raise InvariantError(f"topk_ratio must be in (0, 1], got {self.topk_ratio}")
        if self.proj_out_dim < 1:
            raise InvariantError("proj_out_dim must be >= 1")
        if self.knn_k < 1:
            raise InvariantError("knn_k must be >= 1")
        if self.blur_sigma < 0.0:
            raise InvariantError("blur_sigma must be >= 0")
        if self.routing_bank_size < 1:
            raise InvariantError("routing_bank_size must be >= 1")
        if self.struct_distance_kind not in DISTANCE_KINDS:
            raise InvariantError(f"unknown struct distance {self.struct_distance_kind!r}")
        if len(self.output_map_size) != 2 or min(self.output_map_size) < 1:
            raise InvariantError("output_map_size must be two positive ints")
        bad = [c for c in self.active_components if c not in PHI_COMPONENTS]
        if bad or not self.active_components:
            raise InvariantError(f"active_components must be a non-empty subset of {PHI_COMPONENTS}")
        if self.proxy_dim is not None and self.proxy_dim < 1:
            raise InvariantError("proxy_dim must be >= 1 when set")
        if self.epsilon <= 0.0:
            raise InvariantError("epsilon must be > 0")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["layer_ids"] = list(self.layer_ids)
        d["output_map_size"] = list(self.output_map_size)
        d["active_components"] = list(self.active_components)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvariantError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json_file(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **kw) -> "PipelineConfig":
        return dataclasses.replace(self, **kw)
