import csv
import os

import numpy as np
import pytest
from PIL import Image


def _write_png(path, arr):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    Image.fromarray(arr.astype(np.uint8)).save(path)


def _base_image(rng, size=64, tone=90):
    img = np.full((size, size, 3), tone, dtype=np.float32)
    img += rng.normal(0, 6, size=img.shape)
    return np.clip(img, 0, 255)


def _defect_image(rng, size=64, tone=90):
    img = _base_image(rng, size, tone)
    top, left = int(rng.integers(8, size - 24)), int(rng.integers(8, size - 24))
    img[top : top + 16, left : left + 16] = 240.0
    mask = np.zeros((size, size), dtype=np.uint8)
    mask[top : top + 16, left : left + 16] = 255
    return img, mask


@pytest.fixture(scope="session")
def mvtec_tree(tmp_path_factory):
    """Tiny mvtec-style tree: 1 category, 6 train good, 4+4 test."""
    root = str(tmp_path_factory.mktemp("mvtec"))
    rng = np.random.default_rng(77)
    cat = os.path.join(root, "widget")
    for i in range(6):
        _write_png(os.path.join(cat, "train", "good", f"{i:03d}.png"), _base_image(rng))
    for i in range(4):
        _write_png(os.path.join(cat, "test", "good", f"{i:03d}.png"), _base_image(rng))
    for i in range(4):
        img, mask = _defect_image(rng)
        _write_png(os.path.join(cat, "test", "scratch", f"{i:03d}.png"), img)
        _write_png(os.path.join(cat, "ground_truth", "scratch", f"{i:03d}_mask.png"), mask)
    return root


@pytest.fixture(scope="session")
def visa_tree(tmp_path_factory):
    """Tiny visa-style tree driven by the official split csv layout."""
    root = str(tmp_path_factory.mktemp("visa"))
    rng = np.random.default_rng(88)
    rows = []
    for i in range(3):
        rel = f"candle/Data/Images/Normal/{i:04d}.png"
        _write_png(os.path.join(root, rel), _base_image(rng, tone=120))
        rows.append(("candle", "train", "normal", rel, ""))
    rel = "candle/Data/Images/Normal/0100.png"
    _write_png(os.path.join(root, rel), _base_image(rng, tone=120))
    rows.append(("candle", "test", "normal", rel, ""))
    img, mask = _defect_image(rng, tone=120)
    rel = "candle/Data/Images/Anomaly/000.png"
    mrel = "candle/Data/Masks/Anomaly/000.png"
    _write_png(os.path.join(root, rel), img)
    _write_png(os.path.join(root, mrel), mask)
    rows.append(("candle", "test", "anomaly", rel, mrel))
    csv_path = os.path.join(root, "split_csv", "1cls.csv")
    os.makedirs(os.path.dirname(csv_path), exist_ok=True)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["object", "split", "label", "image", "mask"])
        writer.writerows(rows)
    return root
