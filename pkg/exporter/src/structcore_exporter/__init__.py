"""Image-to-feature bridge: frozen DINOv2 patch tokens -> SCFT files."""

__version__ = "0.1.0"

from .backbone import DinoV2Backbone, StubBackbone, load_backbone
from .config import ExportConfig
from .export import export_dataset, export_records
from .layout import ImageRecord, scan_dataset

__all__ = [
    "DinoV2Backbone",
    "ExportConfig",
    "ImageRecord",
    "StubBackbone",
    "export_dataset",
    "export_records",
    "load_backbone",
    "scan_dataset",
]
