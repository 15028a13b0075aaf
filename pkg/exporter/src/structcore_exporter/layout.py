"""Dataset folder conventions: image records with split/label/mask paths.

mvtec layout:
    root/<category>/train/good/*.png
    root/<category>/test/<kind>/*.png          (kind "good" = normal)
    root/<category>/ground_truth/<kind>/<stem>_mask.png

visa layout (official distribution):
    root/split_csv/1cls.csv with columns object,split,label,image,mask
    (label "normal"/"anomaly"; paths relative to the dataset root)
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

IMAGE_EXTS = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


@dataclass
class ImageRecord:
    category: str
    split: str  # train | test
    label: str  # good | anomalous
    image_path: str
    mask_path: str | None = None

    @property
    def image_id(self) -> str:
        stem = os.path.splitext(os.path.basename(self.image_path))[0]
        parent = os.path.basename(os.path.dirname(self.image_path))
        return f"{self.category}_{self.split}_{parent}_{stem}"


def _is_image(name):
    return os.path.splitext(name)[1].lower() in IMAGE_EXTS


def _listdir_images(d):
    return sorted(p for p in os.listdir(d) if _is_image(p))


def scan_mvtec(root, categories=None) -> list[ImageRecord]:
    records = []
    cats = categories or sorted(
        d for d in os.listdir(root)
        if os.path.isdir(os.path.join(root, d, "train", "good"))
    )
    if not cats:
        raise FileNotFoundError(f"no mvtec-style categories under {root}")
    for cat in cats:
        croot = os.path.join(root, cat)
        train_dir = os.path.join(croot, "train", "good")
        for name in _listdir_images(train_dir):
            records.append(ImageRecord(cat, "train", "good", os.path.join(train_dir, name)))
        test_dir = os.path.join(croot, "test")
        for kind in sorted(os.listdir(test_dir)):
            kdir = os.path.join(test_dir, kind)
            if not os.path.isdir(kdir):
                continue
            for name in _listdir_images(kdir):
                img = os.path.join(kdir, name)
                if kind == "good":
                    records.append(ImageRecord(cat, "test", "good", img))
                    continue
                stem = os.path.splitext(name)[0]
                mask = os.path.join(croot, "ground_truth", kind, f"{stem}_mask.png")
                records.append(
                    ImageRecord(cat, "test", "anomalous", img,
                                mask_path=mask if os.path.exists(mask) else None)
                )
    return records


def scan_visa(root, categories=None) -> list[ImageRecord]:
    csv_path = os.path.join(root, "split_csv", "1cls.csv")
    if not os.path.exists(csv_path):
        raise FileNotFoundError(
            f"visa layout needs the official split file {csv_path}"
        )
    records = []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            cat = row["object"]
            if categories and cat not in categories:
                continue
            label = "good" if row["label"] == "normal" else "anomalous"
            mask = row.get("mask") or None
            records.append(
                ImageRecord(
                    category=cat,
                    split=row["split"],
                    label=label,
                    image_path=os.path.join(root, row["image"]),
                    mask_path=os.path.join(root, mask) if mask else None,
                )
            )
    if not records:
        raise FileNotFoundError("split file matched no images")
    return records


def scan_dataset(root, layout, categories=None) -> list[ImageRecord]:
    if layout == "mvtec":
        return scan_mvtec(root, categories)
    if layout == "visa":
        return scan_visa(root, categories)
    raise ValueError(f"unknown layout {layout!r}")
