"""Persisted per-category model: memory bank, routing bank, calibration.

"SCMB" version 1 container layout (little-endian):

    magic "SCMB" | version u16 | config_len u32 | config JSON (UTF-8)
    | section_count u16
    | per section: name_len u16, name, dtype tag u8 (0=f32, 1=f64),
      ndim u8, dims u32..., raw bytes

JSON carries the scalar config (floats survive exactly through repr);
matrices travel as raw sections for bit-exact round trips.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .errors import (
    BadMagicError,
    CorruptPayloadError,
    DimensionError,
    InvariantError,
    TruncatedFileError,
    VersionMismatchError,
)
from .projection import ProjectionSpec
from .routing import RoutingBank
from .structural import StructCalibration

MAGIC = b"SCMB"
VERSION = 1

_DTYPES = {0: "<f4", 1: "<f8"}
_DTYPE_TAGS = {"float32": 0, "float64": 1}


@dataclass
class ModelBundle:
    category_id: str
    projection_spec: ProjectionSpec
    memory_bank: np.ndarray  # (N_c, D) float32
    routing_bank: RoutingBank
    calibration: StructCalibration
    pipeline_config: PipelineConfig

    def validate(self):
        if self.memory_bank.ndim != 2 or self.memory_bank.shape[0] == 0:
            raise InvariantError("memory bank must be a non-empty matrix")
        if self.memory_bank.shape[1] != self.projection_spec.out_dim:
            raise DimensionError(
                f"memory bank width {self.memory_bank.shape[1]} != projection "
                f"out_dim {self.projection_spec.out_dim}"
            )
        self.routing_bank.validate()
        if self.routing_bank.prototypes.shape[1] != self.projection_spec.out_dim:
            raise DimensionError("routing bank width != projection out_dim")


def _write_section(fh, name: str, arr: np.ndarray):
    arr = np.ascontiguousarray(arr)
    tag = _DTYPE_TAGS[arr.dtype.name]
    nb = name.encode("utf-8")
    fh.write(struct.pack("<H", len(nb)))
    fh.write(nb)
    fh.write(struct.pack("<BB", tag, arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<I", d))
    fh.write(arr.astype(_DTYPES[tag]).tobytes())


def save_bundle(bundle: ModelBundle, path):
    """Serialize a validated bundle; invariants are checked before writing."""
    bundle.validate()
    calib = bundle.calibration
    config = {
        "category_id": bundle.category_id,
        "projection_spec": bundle.projection_spec.to_dict(),
        "pipeline_config": bundle.pipeline_config.to_dict(),
        "calibration": {
            "lambda_auto": calib.lambda_auto,
            "epsilon": calib.epsilon,
            "topk_ratio": calib.topk_ratio,
            "active_components": list(calib.active_components),
            "distance_kind": calib.distance_kind,
            "degenerate": calib.degenerate,
        },
    }
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    sections = [
        ("memory_bank", bundle.memory_bank),
        ("routing_bank", bundle.routing_bank.prototypes),
        ("calib_mu", calib.mu),
        ("calib_sigma", calib.sigma),
        ("train_base_scores", calib.train_base_scores),
        ("train_struct_scores", calib.train_struct_scores),
    ]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<H", len(sections)))
        for name, arr in sections:
            _write_section(fh, name, arr)


class _Cursor:
    def __init__(self, buf, path):
        self.buf = buf
        self.off = 0
        self.path = path

    def take(self, n):
        if n < 0 or self.off + n > len(self.buf):
            raise TruncatedFileError(f"{self.path}: truncated bundle")
        out = self.buf[self.off : self.off + n]
        self.off += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_bundle(path) -> ModelBundle:
    with open(path, "rb") as fh:
        buf = fh.read()
    cur = _Cursor(buf, path)
    if cur.take(4) != MAGIC:
        raise BadMagicError(f"{path}: bad magic")
    version, blob_len = cur.unpack("<HI")
    if version != VERSION:
        raise VersionMismatchError(f"{path}: unsupported bundle version {version}")
    config = json.loads(cur.take(blob_len).decode("utf-8"))
    (section_count,) = cur.unpack("<H")
    sections: dict[str, np.ndarray] = {}
    for _ in range(section_count):
        (name_len,) = cur.unpack("<H")
        name = cur.take(name_len).decode("utf-8")
        tag, ndim = cur.unpack("<BB")
        if tag not in _DTYPES:
            raise CorruptPayloadError(f"{path}: bad dtype tag {tag}")
        shape = tuple(cur.unpack("<" + "I" * ndim)) if ndim else ()
        dtype = np.dtype(_DTYPES[tag])
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        raw = cur.take(count * dtype.itemsize)
        sections[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    if cur.off != len(buf):
        raise CorruptPayloadError(f"{path}: trailing bytes")
    missing = {
        "memory_bank",
        "routing_bank",
        "calib_mu",
        "calib_sigma",
        "train_base_scores",
        "train_struct_scores",
    } - set(sections)
    if missing:
        raise CorruptPayloadError(f"{path}: missing sections {sorted(missing)}")
    calib_cfg = config["calibration"]
    calib = StructCalibration(
        mu=sections["calib_mu"],
        sigma=sections["calib_sigma"],
        lambda_auto=calib_cfg["lambda_auto"],
        epsilon=calib_cfg["epsilon"],
        topk_ratio=calib_cfg["topk_ratio"],
        active_components=tuple(calib_cfg["active_components"]),
        distance_kind=calib_cfg["distance_kind"],
        degenerate=calib_cfg["degenerate"],
        train_base_scores=sections["train_base_scores"],
        train_struct_scores=sections["train_struct_scores"],
    )
    bundle = ModelBundle(
        category_id=config["category_id"],
        projection_spec=ProjectionSpec.from_dict(config["projection_spec"]),
        memory_bank=sections["memory_bank"],
        routing_bank=RoutingBank(
            category_id=config["category_id"], prototypes=sections["routing_bank"]
        ),
        calibration=calib,
        pipeline_config=PipelineConfig.from_dict(config["pipeline_config"]),
    )
    try:
        bundle.validate()
    except DimensionError as exc:
        raise DimensionError(f"{path}: {exc}") from exc
    except InvariantError as exc:
        raise CorruptPayloadError(f"{path}: {exc}") from exc
    return bundle
