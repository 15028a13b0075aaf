"""Command-line surface: fit, score, eval, ablate, bench, synth.

Config precedence is flags > --config file > built-in defaults, and the
effective config is echoed into every output JSON. Exit codes: 0 success,
2 protocol violation, 3 format error, 4 metric undefined.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys

import numpy as np

from . import __version__, kernels
from .bundle import ModelBundle, load_bundle, save_bundle
from .config import DISTANCE_KINDS, PHI_COMPONENTS, PipelineConfig
from .errors import MetricUndefinedError, ProtocolError, StructCoreError
from .knn import score_patches
from .map_ops import build_map, export_map, load_map, pool_max
from .metrics import ScoredSet, auroc, average_precision, f1_max, pixel_auroc
from .pipeline import (
    embed,
    fit_category,
    group_by_category,
    load_manifest,
    load_split_feature_sets,
    score_image,
)
from .projection import realize_projection
from .structural import describe, fit_calibration_from_descriptors, struct_distance
from . import bench as bench_mod
from . import synth as synth_mod

_CONFIG_FLAGS = {
    "layers": "layer_ids",
    "proj_dim": "proj_out_dim",
    "seed": "proj_seed",
    "coreset_ratio": "coreset_ratio",
    "knn_k": "knn_k",
    "blur_sigma": "blur_sigma",
    "topk_ratio": "topk_ratio",
    "routing_bank_size": "routing_bank_size",
    "struct_distance": "struct_distance_kind",
    "epsilon": "epsilon",
    "map_size": "output_map_size",
    "proxy_dim": "proxy_dim",
    "phi": "active_components",
    "lambda_fixed": "lambda_fixed",
}


def _add_config_flags(p):
    p.add_argument("--config", help="JSON file with pipeline config overrides")
    p.add_argument("--layers", help="comma-separated layer ids, e.g. -1,-3,-6,-9,-12")
    p.add_argument("--proj-dim", type=int, dest="proj_dim")
    p.add_argument("--seed", type=int, help="projection seed (default 42)")
    p.add_argument("--coreset-ratio", type=float, dest="coreset_ratio")
    p.add_argument("--knn-k", type=int, dest="knn_k")
    p.add_argument("--blur-sigma", type=float, dest="blur_sigma")
    p.add_argument("--topk-ratio", type=float, dest="topk_ratio")
    p.add_argument("--routing-bank-size", type=int, dest="routing_bank_size")
    p.add_argument("--struct-distance", choices=DISTANCE_KINDS, dest="struct_distance")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--map-size", dest="map_size", help="output map size H,W")
    p.add_argument("--proxy-dim", type=int, dest="proxy_dim")
    p.add_argument("--phi", help="comma-separated subset of sigma,topk,tv")
    p.add_argument("--lambda-fixed", type=float, dest="lambda_fixed",
                   help="override the automatic hybrid weight")


def _parse_int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip() != "")


def build_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        config = PipelineConfig.from_json_file(args.config)
    else:
        config = PipelineConfig()
    overrides = {}
    for flag, field in _CONFIG_FLAGS.items():
        val = getattr(args, flag, None)
        if val is None:
            continue
        if flag == "layers":
            val = _parse_int_list(val)
        elif flag == "map_size":
            val = _parse_int_list(val)
        elif flag == "phi":
            val = tuple(v.strip() for v in val.split(","))
        overrides[field] = val
    return config.replace(**overrides) if overrides else config


def _set_threads(args):
    n = getattr(args, "threads", None)
    if n is not None and kernels.BACKEND == "numba":
        import numba

        numba.set_num_threads(n)


def _load_bundles(bundle_dir) -> dict[str, ModelBundle]:
    bundles = {}
    for name in sorted(os.listdir(bundle_dir)):
        if name.endswith(".scmb"):
            b = load_bundle(os.path.join(bundle_dir, name))
            bundles[b.category_id] = b
    if not bundles:
        raise ProtocolError(f"no .scmb bundles found in {bundle_dir}")
    return bundles


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def cmd_fit(args) -> int:
    _set_threads(args)
    config = build_config(args)
    manifest = load_manifest(args.manifest)
    pairs = load_split_feature_sets(manifest, args.split)
    if not pairs:
        raise ProtocolError(f"manifest split {args.split!r} is empty")
    groups = group_by_category(pairs)
    os.makedirs(args.out_dir, exist_ok=True)
    summary = {"config": config.to_dict(), "backend": kernels.BACKEND, "categories": {}}
    for category, fsets in groups.items():
        bundle = fit_category(category, fsets, config)
        out = os.path.join(args.out_dir, f"{category}.scmb")
        save_bundle(bundle, out)
        calib = bundle.calibration
        summary["categories"][category] = {
            "bundle": out,
            "train_images": len(fsets),
            "memory_bank_rows": int(bundle.memory_bank.shape[0]),
            "routing_prototypes": int(bundle.routing_bank.prototypes.shape[0]),
            "lambda_auto": calib.lambda_auto,
            "degenerate_calibration": calib.degenerate,
        }
        if calib.degenerate:
            print(f"warning: category {category}: degenerate calibration "
                  f"(train struct scores carry no variance)", file=sys.stderr)
    _write_json(os.path.join(args.out_dir, "fit_summary.json"), summary)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_score(args) -> int:
    _set_threads(args)
    bundles = _load_bundles(args.bundle_dir)
    if args.lambda_fixed is not None:
        for cid, b in bundles.items():
            b.pipeline_config = b.pipeline_config.replace(lambda_fixed=args.lambda_fixed)
    manifest = load_manifest(args.manifest)
    pairs = load_split_feature_sets(manifest, args.split)
    if not pairs:
        raise ProtocolError(f"manifest split {args.split!r} is empty")
    if args.category is not None and args.category not in bundles:
        raise ProtocolError(f"unknown category {args.category!r}")
    maps_dir = args.maps_dir
    if maps_dir:
        os.makedirs(maps_dir, exist_ok=True)
    config_echo = next(iter(bundles.values())).pipeline_config.to_dict()
    records = []
    w_cache: dict = {}
    n_routed_ok = 0
    n_with_truth = 0
    for entry, fset in pairs:
        forced = None
        if args.no_routing:
            forced = args.category if args.category is not None else entry.category
            if forced is None:
                raise ProtocolError(
                    f"{entry.path}: --no-routing needs --category or manifest categories"
                )
            if forced not in bundles:
                raise ProtocolError(f"unknown category {forced!r}")
        res = score_image(fset, bundles, forced_category=forced, w_cache=w_cache)
        rec = {
            "image_id": res.image_id,
            "path": entry.path,
            "category": entry.category,
            "label": res.label,
            "routed_category": res.routed_category,
            "route_scores": res.route_scores,
            "s_base": res.s_base,
            "s_struct": res.s_struct,
            "s_hyb": res.s_hyb,
        }
        if entry.category is not None:
            n_with_truth += 1
            if res.routed_category == entry.category:
                n_routed_ok += 1
        if maps_dir:
            prefix = os.path.join(maps_dir, res.image_id)
            export_map(res.amap, prefix)
            rec["map"] = prefix
        records.append(rec)
    doc = {
        "schema": "structcore-scores-v1",
        "config": config_echo,
        "backend": kernels.BACKEND,
        "no_routing": bool(args.no_routing),
        "records": records,
    }
    if n_with_truth and not args.no_routing:
        doc["routing_accuracy"] = n_routed_ok / n_with_truth
    if args.threshold_quantile is not None:
        q = args.threshold_quantile
        thresholds = {}
        for cid, b in bundles.items():
            calib = b.calibration
            lam = (
                b.pipeline_config.lambda_fixed
                if b.pipeline_config.lambda_fixed is not None
                else calib.lambda_auto
            )
            train_hyb = calib.train_base_scores + lam * calib.train_struct_scores
            thresholds[cid] = {
                "quantile": q,
                "tau_base": float(np.quantile(calib.train_base_scores, q)),
                "tau_hyb": float(np.quantile(train_hyb, q)),
            }
        doc["thresholds"] = thresholds
        for rec in records:
            tau = thresholds[rec["routed_category"]]
            rec["decision_base"] = bool(rec["s_base"] >= tau["tau_base"])
            rec["decision_hyb"] = bool(rec["s_hyb"] >= tau["tau_hyb"])
    _write_json(args.out, doc)
    print(f"scored {len(records)} images -> {args.out}")
    return 0


def _metric_triplet(scores, labels, warnings, context):
    sset = ScoredSet(np.asarray(scores), np.asarray(labels))
    out = {}
    try:
        out["auroc"] = auroc(sset)
    except MetricUndefinedError as exc:
        warnings.append(f"{context}: {exc}")
        out["auroc"] = None
    try:
        out["ap"] = average_precision(sset)
        out["f1_max"] = f1_max(sset)
    except MetricUndefinedError as exc:
        warnings.append(f"{context}: {exc}")
        out["ap"] = None
        out["f1_max"] = None
    return out


def cmd_eval(args) -> int:
    with open(args.scores, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    records = doc["records"]
    mask_overrides = {}
    if getattr(args, "manifest", None):
        manifest = load_manifest(args.manifest)
        for split in manifest.splits:
            for entry in manifest.entries(split):
                if entry.mask_path is not None:
                    mask_overrides[entry.path] = entry.mask_path
    by_cat: dict[str, list[dict]] = {}
    for rec in records:
        cat = rec.get("category") or rec["routed_category"]
        by_cat.setdefault(cat, []).append(rec)
    warnings: list[str] = []
    per_category = {}
    for cat in sorted(by_cat):
        recs = by_cat[cat]
        labeled = [r for r in recs if r["label"] is not None]
        if not labeled:
            warnings.append(f"{cat}: no labels, skipped")
            continue
        labels = [1 if r["label"] == "anomalous" else 0 for r in labeled]
        row = {
            "n_good": labels.count(0),
            "n_anomalous": labels.count(1),
            "base": _metric_triplet([r["s_base"] for r in labeled], labels, warnings, f"{cat}/base"),
            "struct": _metric_triplet([r["s_struct"] for r in labeled], labels, warnings, f"{cat}/struct"),
            "hybrid": _metric_triplet([r["s_hyb"] for r in labeled], labels, warnings, f"{cat}/hybrid"),
        }
        row["pixel_auroc"] = _pixel_auroc_for(recs, warnings, cat, mask_overrides)
        per_category[cat] = row
    if not per_category:
        raise MetricUndefinedError("no category produced any metric")
    mean_row = {}
    for column in ("base", "struct", "hybrid"):
        mean_row[column] = {}
        for metric in ("auroc", "ap", "f1_max"):
            vals = [
                per_category[c][column][metric]
                for c in per_category
                if per_category[c][column][metric] is not None
            ]
            mean_row[column][metric] = float(np.mean(vals)) if vals else None
    pix = [
        per_category[c]["pixel_auroc"]
        for c in per_category
        if per_category[c]["pixel_auroc"] is not None
    ]
    mean_row["pixel_auroc"] = float(np.mean(pix)) if pix else None
    report = {
        "schema": "structcore-eval-v1",
        "config": doc.get("config"),
        "per_category": per_category,
        "mean": mean_row,
        "warnings": warnings,
    }
    if all(
        mean_row[col][m] is None
        for col in ("base", "struct", "hybrid")
        for m in ("auroc", "ap", "f1_max")
    ):
        raise MetricUndefinedError("all image-level metrics undefined")
    if args.out:
        _write_json(args.out, report)
    print(json.dumps(report, indent=2))
    return 0


def _pixel_auroc_for(recs, warnings, cat, mask_overrides=None):
    """Pooled pixel AUROC when exported maps and masks exist.

    Masks come from manifest overrides first, else from the mask section of
    the feature file itself.
    """
    from .features import read_feature_file

    maps, masks = [], []
    for rec in recs:
        if "map" not in rec:
            continue
        if mask_overrides and rec["path"] in mask_overrides:
            mask = np.load(mask_overrides[rec["path"]])
        else:
            mask = read_feature_file(rec["path"]).pixel_mask
        if mask is None:
            continue
        amap = load_map(rec["map"])
        if amap.data.shape != mask.shape:
            warnings.append(f"{cat}: mask shape {mask.shape} != map {amap.data.shape}")
            return None
        maps.append(amap)
        masks.append(mask)
    if not maps:
        return None
    try:
        return pixel_auroc(maps, masks)
    except MetricUndefinedError as exc:
        warnings.append(f"{cat}/pixel: {exc}")
        return None


def _phi_subsets():
    subsets = []
    for n in (1, 2, 3):
        subsets.extend(itertools.combinations(PHI_COMPONENTS, n))
    return subsets


def cmd_ablate(args) -> int:
    _set_threads(args)
    config = build_config(args)
    manifest = load_manifest(args.manifest)
    train_pairs = load_split_feature_sets(manifest, "train")
    test_pairs = load_split_feature_sets(manifest, "test")
    if not train_pairs or not test_pairs:
        raise ProtocolError("ablate needs non-empty train and test splits")
    groups = group_by_category(train_pairs)
    test_groups: dict[str, list] = {}
    for entry, fset in test_pairs:
        cat = entry.category
        if cat is None:
            raise ProtocolError(f"{entry.path}: ablation needs category ids")
        test_groups.setdefault(cat, []).append(fset)
    # Per category: fit once, cache train/test descriptors and base scores;
    # every variant then only refits (mask, distance, lambda) on the cache.
    cache = {}
    for category, fsets in groups.items():
        bundle = fit_category(category, fsets, config)
        w = realize_projection(bundle.projection_spec)

        def _phis_and_bases(sets):
            phis, bases, labels = [], [], []
            for fs in sets:
                emb = embed(fs, bundle.projection_spec, config, w=w)
                ps = score_patches(emb, bundle.memory_bank, config.knn_k,
                                   fs.grid_h, fs.grid_w)
                amap = build_map(ps, *config.output_map_size, config.blur_sigma)
                phis.append(describe(amap, config.topk_ratio).as_array())
                bases.append(pool_max(amap))
                labels.append(1 if fs.label == "anomalous" else 0)
            return np.array(phis), np.array(bases), np.array(labels)

        train_phis, train_bases, _ = _phis_and_bases(fsets)
        test_phis, test_bases, test_labels = _phis_and_bases(test_groups.get(category, []))
        cache[category] = (train_phis, train_bases, test_phis, test_bases, test_labels)

    def _category_aurocs(mask, kind):
        base_by_cat, hyb_by_cat = {}, {}
        for category, (tr_phi, tr_base, te_phi, te_base, te_lab) in cache.items():
            calib = fit_calibration_from_descriptors(
                tr_phi, tr_base,
                topk_ratio=config.topk_ratio, epsilon=config.epsilon,
                active_components=mask, distance_kind=kind,
            )
            d = np.array([struct_distance(p, calib) for p in te_phi])
            hyb = te_base + calib.lambda_auto * d
            sset_base = ScoredSet(te_base, te_lab)
            sset_hyb = ScoredSet(hyb, te_lab)
            base_by_cat[category] = auroc(sset_base)
            hyb_by_cat[category] = auroc(sset_hyb)
        return base_by_cat, hyb_by_cat

    report = {
        "schema": "structcore-ablate-v1",
        "axis": args.axis,
        "config": config.to_dict(),
        "backend": kernels.BACKEND,
        "variants": [],
    }
    if args.axis == "phi-subsets":
        base_by_cat, _ = _category_aurocs(PHI_COMPONENTS, config.struct_distance_kind)
        base_mean = float(np.mean(list(base_by_cat.values())))
        report["base"] = {"mean_auroc": base_mean, "per_category": base_by_cat}
        for mask in _phi_subsets():
            b, h = _category_aurocs(mask, config.struct_distance_kind)
            hyb_mean = float(np.mean(list(h.values())))
            report["variants"].append({
                "phi": list(mask),
                "base_auroc": base_mean,
                "hybrid_auroc": hyb_mean,
                "delta": hyb_mean - base_mean,
                "per_category": h,
            })
    else:  # distances
        for kind in DISTANCE_KINDS:
            b, h = _category_aurocs(config.active_components, kind)
            bvals = np.array(list(b.values()))
            hvals = np.array(list(h.values()))
            report["variants"].append({
                "distance": kind,
                "base_mean": float(bvals.mean()),
                "base_std": float(bvals.std()),
                "hybrid_mean": float(hvals.mean()),
                "hybrid_std": float(hvals.std()),
                "delta": float(hvals.mean() - bvals.mean()),
                "per_category": h,
            })
    if args.out:
        _write_json(args.out, report)
    print(json.dumps(report, indent=2))
    return 0


def cmd_bench(args) -> int:
    _set_threads(args)
    bundles = _load_bundles(args.bundle_dir)
    bundle = next(iter(bundles.values()))
    manifest = load_manifest(args.manifest)
    pairs = load_split_feature_sets(manifest, args.split)
    if not pairs:
        raise ProtocolError(f"manifest split {args.split!r} is empty")
    fsets = [fs for _, fs in pairs]
    report = bench_mod.bench_scoring(fsets, bundle, repeats=args.repeats)
    report["config"] = bundle.pipeline_config.to_dict()
    if args.compare_backends:
        report["backend_comparison"] = bench_mod.compare_backends(
            knn_k=bundle.pipeline_config.knn_k,
            blur_sigma=max(bundle.pipeline_config.blur_sigma, 1.0),
        )
    if args.out:
        _write_json(args.out, report)
    print(json.dumps(report, indent=2))
    return 0


def cmd_synth(args) -> int:
    if args.mode == "structgap":
        meta = synth_mod.generate_structgap(args.out_dir, seed=args.seed)
    else:
        meta = synth_mod.generate_routing(args.out_dir, seed=args.seed)
    print(json.dumps(meta, indent=2, default=str))
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="structcore",
        description="Memory-bank anomaly detection with structure-aware image scoring",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit per-category bundles from train-good features")
    f.add_argument("--manifest", required=True)
    f.add_argument("--out-dir", required=True)
    f.add_argument("--split", default="train")
    f.add_argument("--threads", type=int)
    _add_config_flags(f)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("score", help="score feature files against fitted bundles")
    s.add_argument("--manifest", required=True)
    s.add_argument("--bundle-dir", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--split", default="test")
    s.add_argument("--no-routing", action="store_true",
                   help="bypass routing; use --category or manifest categories")
    s.add_argument("--category", help="force all images to one category")
    s.add_argument("--threshold-quantile", type=float, nargs="?", const=0.995,
                   default=None, help="report train-good quantile thresholds (default 0.995)")
    s.add_argument("--maps-dir", help="export anomaly maps here")
    s.add_argument("--lambda-fixed", type=float, dest="lambda_fixed")
    s.add_argument("--threads", type=int)
    s.set_defaults(func=cmd_score)

    e = sub.add_parser("eval", help="metric report from score records")
    e.add_argument("--scores", required=True)
    e.add_argument("--out")
    e.add_argument("--manifest", help="pick up mask paths for pixel AUROC")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="descriptor/distance ablation matrices")
    a.add_argument("--manifest", required=True)
    a.add_argument("--axis", choices=("phi-subsets", "distances"), required=True)
    a.add_argument("--out")
    a.add_argument("--threads", type=int)
    _add_config_flags(a)
    a.set_defaults(func=cmd_ablate)

    b = sub.add_parser("bench", help="timing breakdown of the scoring path")
    b.add_argument("--manifest", required=True)
    b.add_argument("--bundle-dir", required=True)
    b.add_argument("--split", default="test")
    b.add_argument("--out")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--compare-backends", action="store_true",
                   help="also time each kernel under both backends")
    b.add_argument("--threads", type=int)
    b.set_defaults(func=cmd_bench)

    y = sub.add_parser("synth", help="generate synthetic feature fixtures")
    y.add_argument("--out-dir", required=True)
    y.add_argument("--mode", choices=("structgap", "routing"), default="structgap")
    y.add_argument("--seed", type=int, default=42)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except StructCoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
