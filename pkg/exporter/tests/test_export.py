import json
import os

import numpy as np
import pytest
import torch

from structcore.features import read_feature_file
from structcore.pipeline import load_manifest
from structcore_exporter.backbone import StubBackbone, load_backbone
from structcore_exporter.cli import main
from structcore_exporter.config import ExportConfig
from structcore_exporter.export import export_dataset, export_records
from structcore_exporter.layout import ImageRecord, scan_mvtec

SMALL = dict(resize=64, crop=56)  # 4x4 token grid


def _cfg(**kw):
    args = dict(SMALL)
    args.update(kw)
    return ExportConfig(**args)


@pytest.fixture(scope="module")
def exported(mvtec_tree, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("features"))
    manifest = export_dataset(mvtec_tree, StubBackbone(), _cfg(), out)
    return out, manifest


def test_files_pass_primary_validation(exported):
    out, manifest = exported
    names = manifest["train"] + manifest["test"]
    assert len(names) == 14
    for entry in names:
        fset = read_feature_file(os.path.join(out, entry["path"]))
        assert fset.layer_ids == [-1, -3, -6, -9, -12]
        assert fset.grid_h == fset.grid_w == 4
        for lid in fset.layer_ids:
            assert fset.layers[lid].shape == (16, 32)


def test_labels_and_masks(exported):
    out, manifest = exported
    for entry in manifest["train"]:
        fset = read_feature_file(os.path.join(out, entry["path"]))
        assert fset.label == "good"
        assert fset.pixel_mask is None
    anom = good = 0
    for entry in manifest["test"]:
        fset = read_feature_file(os.path.join(out, entry["path"]))
        if fset.label == "anomalous":
            anom += 1
            assert fset.pixel_mask is not None
            assert fset.pixel_mask.shape == (56, 56)
            assert fset.pixel_mask.sum() > 0
        else:
            good += 1
    assert anom == 4 and good == 4


def test_manifest_loads_in_primary(exported):
    out, _ = exported
    man = load_manifest(os.path.join(out, "manifest.json"))
    assert len(man.entries("train")) == 6
    assert len(man.entries("test")) == 8
    assert man.categories("train") == ["widget"]
    with open(os.path.join(out, "manifest.json")) as fh:
        doc = json.load(fh)
    meta = doc["_export"]
    assert meta["interpolation"] == "bicubic"
    assert meta["grid"] == [4, 4]
    assert meta["cls_token"] == "excluded"


def test_deterministic_export(mvtec_tree, tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        export_dataset(mvtec_tree, StubBackbone(), _cfg(), str(out))
    for rel in sorted(os.listdir(a / "widget")):
        assert (a / "widget" / rel).read_bytes() == (b / "widget" / rel).read_bytes()


def test_default_geometry_gives_784_tokens(mvtec_tree, tmp_path):
    rec = scan_mvtec(mvtec_tree)[0]
    cfg = ExportConfig()  # resize 448, crop 392, grid 28
    export_records([rec], StubBackbone(), cfg, str(tmp_path))
    fset = read_feature_file(tmp_path / "widget" / (rec.image_id + ".scft"))
    assert fset.grid_h == fset.grid_w == 28
    assert fset.layers[-1].shape[0] == 784


def test_row_major_token_order(tmp_path):
    # one bright 14x14 patch at grid cell (1, 2) of a 4x4 grid: only token
    # index 1*4+2 should stand out -> the exported order is row-major
    from PIL import Image

    arr = np.zeros((56, 56, 3), dtype=np.uint8)
    arr[14:28, 28:42] = 255
    path = tmp_path / "img.png"
    Image.fromarray(arr).save(path)
    rec = ImageRecord("c", "train", "good", str(path))
    cfg = _cfg(resize=56, crop=56, layer_ids=(-1,))
    export_records([rec], StubBackbone(), cfg, str(tmp_path / "out"))
    fset = read_feature_file(tmp_path / "out" / "c" / (rec.image_id + ".scft"))
    tokens = fset.layers[-1]
    deviation = np.abs(tokens - np.median(tokens, axis=0)).sum(axis=1)
    assert int(deviation.argmax()) == 1 * 4 + 2


def test_grid_mismatch_detected(mvtec_tree, tmp_path):
    class WrongCountBackbone(StubBackbone):
        def tokens(self, images, layer_ids):
            return [t[:, :-1, :] for t in super().tokens(images, layer_ids)]

    rec = scan_mvtec(mvtec_tree)[0]
    with pytest.raises(ValueError, match="tokens"):
        export_records([rec], WrongCountBackbone(), _cfg(), str(tmp_path))


def test_patch_size_mismatch_detected(mvtec_tree, tmp_path):
    rec = scan_mvtec(mvtec_tree)[0]
    with pytest.raises(ValueError, match="patch size"):
        export_records([rec], StubBackbone(patch_size=7), _cfg(), str(tmp_path))


def test_stub_registry_and_unknown_hub_name():
    assert isinstance(load_backbone("stub"), StubBackbone)


def test_cli_end_to_end(mvtec_tree, tmp_path):
    out = tmp_path / "cli_out"
    rc = main([
        "--dataset-root", mvtec_tree, "--layout", "mvtec",
        "--out-dir", str(out), "--backbone", "stub",
        "--resize", "64", "--crop", "56", "--limit", "10",
    ])
    assert rc == 0
    man = load_manifest(out / "manifest.json")
    assert len(man.entries("train")) + len(man.entries("test")) == 10


def test_cli_bad_dataset(tmp_path):
    rc = main([
        "--dataset-root", str(tmp_path), "--layout", "mvtec",
        "--out-dir", str(tmp_path / "o"), "--backbone", "stub",
    ])
    assert rc == 1
