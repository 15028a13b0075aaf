"""CLI: export --dataset-root --layout {mvtec,visa} --out-dir."""

from __future__ import annotations

import argparse
import json
import sys

from .backbone import load_backbone
from .config import ExportConfig
from .export import export_dataset


def make_parser():
    p = argparse.ArgumentParser(
        prog="structcore-export",
        description="Export DINOv2 patch features as SCFT files",
    )
    p.add_argument("--dataset-root", required=True)
    p.add_argument("--layout", choices=("mvtec", "visa"), default="mvtec")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--categories", help="comma-separated subset, default all")
    p.add_argument("--backbone", default="dinov2_vitb14",
                   help="torch.hub DINOv2 name, or 'stub' for offline tests")
    p.add_argument("--layers", default="-1,-3,-6,-9,-12")
    p.add_argument("--resize", type=int, default=448)
    p.add_argument("--crop", type=int, default=392)
    p.add_argument("--device", default="cpu")
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--limit", type=int, help="export at most N images")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    backbone = load_backbone(args.backbone, args.device)
    config = ExportConfig(
        resize=args.resize,
        crop=args.crop,
        patch_size=backbone.patch_size,
        layer_ids=tuple(int(v) for v in args.layers.split(",")),
        device=args.device,
        layout=args.layout,
        batch_size=args.batch_size,
    )
    categories = args.categories.split(",") if args.categories else None
    try:
        manifest = export_dataset(
            args.dataset_root, backbone, config, args.out_dir,
            categories=categories, limit=args.limit,
        )
    except (FileNotFoundError, ValueError, IOError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    n_train = len(manifest["train"])
    n_test = len(manifest["test"])
    print(json.dumps({"train": n_train, "test": n_test, "out_dir": args.out_dir}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
