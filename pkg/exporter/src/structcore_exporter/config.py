"""Export configuration: preprocessing geometry and layer selection."""

from __future__ import annotations

from dataclasses import dataclass

DEFAULT_LAYER_IDS = (-1, -3, -6, -9, -12)

# Standard ImageNet statistics; DINOv2 checkpoints were trained with them.
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class ExportConfig:
    resize: int = 448
    crop: int = 392
    patch_size: int = 14
    layer_ids: tuple[int, ...] = DEFAULT_LAYER_IDS
    device: str = "cpu"
    layout: str = "mvtec"  # or "visa"
    batch_size: int = 8
    interpolation: str = "bicubic"  # resize mode, recorded in the manifest

    def __post_init__(self):
        self.layer_ids = tuple(int(l) for l in self.layer_ids)
        if self.crop % self.patch_size != 0:
            raise ValueError(
                f"crop {self.crop} must be divisible by patch size {self.patch_size}"
            )
        if self.resize < self.crop:
            raise ValueError("resize must be >= crop")
        if not self.layer_ids:
            raise ValueError("layer_ids must be non-empty")
        if len(set(self.layer_ids)) != len(self.layer_ids):
            raise ValueError("layer_ids must be unique")
        if self.layout not in ("mvtec", "visa"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def grid(self) -> int:
        return self.crop // self.patch_size
