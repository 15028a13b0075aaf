"""Patch-feature sets and the "SCFT" binary interchange format.

Layout (all little-endian):

    magic "SCFT" | version u16 | image_id_len u16 | image_id bytes
    | layer_count u16 | per layer: (layer_id i32, P u32, d u32)
    | grid_h u32 | grid_w u32 | label u8 | mask_flag u8
    | if mask_flag: mask_h u32, mask_w u32
    | payload: row-major float32 per layer, header order
    | if mask_flag: mask bytes, one 0/1 byte per pixel, row-major

Readers bounds-check every length field against the remaining file size
before allocating.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    CorruptPayloadError,
    InvariantError,
    TruncatedFileError,
    VersionMismatchError,
)

MAGIC = b"SCFT"
VERSION = 1

LABEL_GOOD = "good"
LABEL_ANOMALOUS = "anomalous"

_LABEL_TO_BYTE = {LABEL_GOOD: 0, LABEL_ANOMALOUS: 1, None: 255}
_BYTE_TO_LABEL = {0: LABEL_GOOD, 1: LABEL_ANOMALOUS, 255: None}


@dataclass
class PatchFeatureSet:
    """Per-image patch-token matrices for a set of backbone layers."""

    image_id: str
    layer_ids: list[int]
    layers: dict[int, np.ndarray]  # layer_id -> (P, d) float32
    grid_h: int
    grid_w: int
    label: str | None = None
    pixel_mask: np.ndarray | None = None  # (H_img, W_img) uint8 in {0, 1}

    @property
    def num_patches(self) -> int:
        return self.grid_h * self.grid_w

    def validate(self):
        if not self.layer_ids:
            raise InvariantError("feature set must have at least one layer")
        if len(set(self.layer_ids)) != len(self.layer_ids):
            raise InvariantError("layer_ids must be unique")
        if set(self.layer_ids) != set(self.layers):
            raise InvariantError("layer_ids and layer matrices disagree")
        if self.grid_h < 1 or self.grid_w < 1:
            raise InvariantError("grid dims must be positive")
        p = self.num_patches
        for lid in self.layer_ids:
            mat = self.layers[lid]
            if mat.ndim != 2 or mat.shape[0] != p:
                raise InvariantError(
                    f"layer {lid}: expected {p} patch rows, got shape {mat.shape}"
                )
            if not np.isfinite(mat).all():
                raise InvariantError(f"layer {lid} contains NaN/Inf entries")
        if self.label not in _LABEL_TO_BYTE:
            raise InvariantError(f"bad label {self.label!r}")
        if self.pixel_mask is not None:
            m = self.pixel_mask
            if m.ndim != 2:
                raise InvariantError("pixel_mask must be 2-D")
            if not np.isin(m, (0, 1)).all():
                raise InvariantError("pixel_mask must be binary")


def write_feature_file(fset: PatchFeatureSet, path):
    """Serialize a validated feature set; rejects invariant violations first."""
    fset.validate()
    image_id = fset.image_id.encode("utf-8")
    if len(image_id) > 0xFFFF:
        raise InvariantError("image_id too long")
    head = [MAGIC, struct.pack("<HH", VERSION, len(image_id)), image_id]
    head.append(struct.pack("<H", len(fset.layer_ids)))
    for lid in fset.layer_ids:
        mat = fset.layers[lid]
        head.append(struct.pack("<iII", lid, mat.shape[0], mat.shape[1]))
    head.append(struct.pack("<IIB", fset.grid_h, fset.grid_w, _LABEL_TO_BYTE[fset.label]))
    if fset.pixel_mask is not None:
        head.append(struct.pack("<BII", 1, *fset.pixel_mask.shape))
    else:
        head.append(struct.pack("<B", 0))
    with open(path, "wb") as fh:
        fh.write(b"".join(head))
        for lid in fset.layer_ids:
            fh.write(np.ascontiguousarray(fset.layers[lid], dtype="<f4").tobytes())
        if fset.pixel_mask is not None:
            fh.write(np.ascontiguousarray(fset.pixel_mask, dtype=np.uint8).tobytes())


class _Cursor:
    def __init__(self, buf, path):
        self.buf = buf
        self.off = 0
        self.path = path

    def take(self, n):
        if n < 0 or self.off + n > len(self.buf):
            raise TruncatedFileError(f"{self.path}: truncated (need {n} bytes at {self.off})")
        out = self.buf[self.off : self.off + n]
        self.off += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_feature_file(path) -> PatchFeatureSet:
    """Exact inverse of write_feature_file with validation on every field."""
    with open(path, "rb") as fh:
        buf = fh.read()
    cur = _Cursor(buf, path)
    if cur.take(4) != MAGIC:
        raise BadMagicError(f"{path}: bad magic")
    (version,) = cur.unpack("<H")
    if version != VERSION:
        raise VersionMismatchError(f"{path}: unsupported version {version}")
    (id_len,) = cur.unpack("<H")
    image_id = cur.take(id_len).decode("utf-8")
    (layer_count,) = cur.unpack("<H")
    if layer_count == 0:
        raise CorruptPayloadError(f"{path}: zero layers")
    shapes = []
    for _ in range(layer_count):
        lid, p, d = cur.unpack("<iII")
        shapes.append((lid, p, d))
    grid_h, grid_w, label_byte, mask_flag = cur.unpack("<IIBB")
    if label_byte not in _BYTE_TO_LABEL:
        raise CorruptPayloadError(f"{path}: bad label byte {label_byte}")
    mask_shape = None
    if mask_flag == 1:
        mask_shape = cur.unpack("<II")
    elif mask_flag != 0:
        raise CorruptPayloadError(f"{path}: bad mask flag {mask_flag}")
    layers = {}
    layer_ids = []
    for lid, p, d in shapes:
        raw = cur.take(p * d * 4)
        mat = np.frombuffer(raw, dtype="<f4").reshape(p, d).copy()
        if not np.isfinite(mat).all():
            raise CorruptPayloadError(f"{path}: NaN/Inf in layer {lid} payload")
        layers[lid] = mat
        layer_ids.append(lid)
    mask = None
    if mask_shape is not None:
        mh, mw = mask_shape
        raw = cur.take(mh * mw)
        mask = np.frombuffer(raw, dtype=np.uint8).reshape(mh, mw).copy()
        if not np.isin(mask, (0, 1)).all():
            raise CorruptPayloadError(f"{path}: non-binary mask payload")
    if cur.off != len(buf):
        raise CorruptPayloadError(f"{path}: {len(buf) - cur.off} trailing bytes")
    fset = PatchFeatureSet(
        image_id=image_id,
        layer_ids=layer_ids,
        layers=layers,
        grid_h=grid_h,
        grid_w=grid_w,
        label=_BYTE_TO_LABEL[label_byte],
        pixel_mask=mask,
    )
    try:
        fset.validate()
    except InvariantError as exc:
        raise CorruptPayloadError(f"{path}: {exc}") from exc
    return fset
