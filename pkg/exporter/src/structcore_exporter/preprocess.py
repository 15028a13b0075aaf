"""Image and mask preprocessing: bicubic resize, center crop, normalize.

Masks go through the same geometry with nearest-neighbor resampling so they
stay binary and aligned with the token grid's pixel frame.
"""

from __future__ import annotations

import numpy as np
import torch
from PIL import Image

from .config import IMAGENET_MEAN, IMAGENET_STD, ExportConfig

_RESAMPLE = {
    "bicubic": Image.Resampling.BICUBIC,
    "bilinear": Image.Resampling.BILINEAR,
}


def _center_crop(img: Image.Image, size: int) -> Image.Image:
    w, h = img.size
    left = (w - size) // 2
    top = (h - size) // 2
    return img.crop((left, top, left + size, top + size))


def load_image_tensor(path, config: ExportConfig) -> torch.Tensor:
    """(3, crop, crop) float32 tensor, ImageNet-normalized."""
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            img = img.resize((config.resize, config.resize), _RESAMPLE[config.interpolation])
            img = _center_crop(img, config.crop)
            arr = np.asarray(img, dtype=np.float32) / 255.0
    except (OSError, SyntaxError) as exc:
        raise IOError(f"unreadable image {path}: {exc}") from exc
    mean = np.asarray(IMAGENET_MEAN, dtype=np.float32)
    std = np.asarray(IMAGENET_STD, dtype=np.float32)
    arr = (arr - mean) / std
    return torch.from_numpy(arr.transpose(2, 0, 1).copy())


def load_mask(path, config: ExportConfig) -> np.ndarray:
    """(crop, crop) uint8 0/1 mask, same geometry as the image."""
    try:
        with Image.open(path) as img:
            img = img.convert("L")
            img = img.resize((config.resize, config.resize), Image.Resampling.NEAREST)
            img = _center_crop(img, config.crop)
            arr = np.asarray(img)
    except (OSError, SyntaxError) as exc:
        raise IOError(f"unreadable mask {path}: {exc}") from exc
    return (arr > 0).astype(np.uint8)
