"""Acceptance gate: one test per criterion, one printed line per criterion.

Run as `pytest tests/test_acceptance.py -v -s` to see the PASS/FAIL lines.
"""

import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from oracles import (
    auroc_pairwise,
    average_precision_exhaustive,
    covering_radius_of,
    f1_exhaustive,
    kcenter_optimal_radius,
    knn_mean_sqdist_oracle,
)
from structcore import kernels, synth
from structcore.cli import main
from structcore.config import DISTANCE_KINDS, PipelineConfig
from structcore.coreset import kcenter_select
from structcore.knn import score_patches
from structcore.map_ops import AnomalyMap
from structcore.metrics import ScoredSet, auroc, average_precision, f1_max
from structcore.pipeline import (
    fit_category,
    group_by_category,
    load_manifest,
    load_split_feature_sets,
    score_image,
)
from structcore.routing import build_routing_bank, route
from structcore.structural import (
    StructCalibration,
    describe,
    fit_calibration,
    fit_calibration_from_descriptors,
    struct_distance,
)


def _report(cid: str, ok: bool, detail: str = ""):
    print(f"\n{cid} {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"{cid}: {detail}"


@pytest.fixture(scope="module")
def structgap(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept_structgap")
    data = os.path.join(root, "data")
    synth.generate_structgap(data, seed=42)
    return {
        "root": str(root),
        "data": data,
        "manifest": os.path.join(data, "manifest.json"),
        "config": os.path.join(data, "pipeline_config.json"),
    }


def test_c1_knn_exactness(rng):
    # warm the kernels so JIT compilation is not counted against the budget
    score_patches(np.zeros((2, 3), np.float32), np.ones((4, 3), np.float32), 2, 1, 2)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        p = int(rng.integers(1, 65))
        n = int(rng.integers(1, 257))
        d = int(rng.integers(1, 17))
        k = int(rng.integers(1, 9))
        q = rng.standard_normal((p, d)).astype(np.float32)
        b = rng.standard_normal((n, d)).astype(np.float32)
        got = score_patches(q, b, k, 1, p).scores.astype(np.float64)
        want = knn_mean_sqdist_oracle(q, b, k)
        rel = np.abs(got - want) / np.maximum(np.abs(want), 1e-12)
        rel[np.abs(got - want) < 1e-7] = 0.0  # near-zero scores: absolute regime
        worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - t0
    _report(
        "C1",
        worst <= 1e-4 and elapsed < 10.0,
        f"kNN vs full-sort oracle: worst rel err {worst:.2e}, {elapsed:.2f}s (< 10 s)",
    )


def test_c2_coreset_two_approximation(rng):
    t0 = time.perf_counter()
    worst_ratio = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 13))
        d = int(rng.integers(1, 5))
        pool = rng.standard_normal((n, d))
        for m in range(1, min(4, n) + 1):
            idx = kcenter_select(pool, m)
            greedy_r = covering_radius_of(pool, idx)
            opt_r = kcenter_optimal_radius(pool, m)
            if opt_r > 0:
                worst_ratio = max(worst_ratio, greedy_r / opt_r)
            else:
                assert greedy_r == 0.0
    elapsed = time.perf_counter() - t0
    _report(
        "C2",
        worst_ratio <= 2.0 + 1e-9 and elapsed < 30.0,
        f"greedy/optimal radius worst ratio {worst_ratio:.4f} (<= 2), {elapsed:.2f}s (< 30 s)",
    )


def test_c3_descriptor_exactness(rng):
    amap = AnomalyMap(
        data=np.array([[0.0, 1.0], [0.0, 1.0]], np.float32), smoothed=False,
        source_grid=(2, 2),
    )
    d = describe(amap, 0.5)
    hand_ok = d.sigma_s == 0.5 and d.topk_mean == 1.0 and d.tv == 0.5
    collapse_ok = True
    for _ in range(50):
        h = int(rng.integers(2, 12))
        w = int(rng.integers(2, 12))
        m = rng.random((h, w)).astype(np.float32)
        r = float(rng.uniform(1e-9, 1.0 / (h * w)))
        got = describe(AnomalyMap(m, False, (h, w)), r).topk_mean
        collapse_ok &= got == float(m.astype(np.float64).max())
    _report(
        "C3",
        hand_ok and collapse_ok,
        f"2x2 hand case exact: {hand_ok}; top-k collapse to max for r <= 1/HW: {collapse_ok}",
    )


def test_c4_calibration_identities(rng):
    mu = np.array([0.4, 1.7, 0.05])
    centered_ok = True
    for kind in DISTANCE_KINDS:
        calib = StructCalibration(
            mu=mu, sigma=np.array([0.2, 0.5, 0.01]), lambda_auto=1.0,
            distance_kind=kind,
        )
        centered_ok &= struct_distance(mu.copy(), calib) == pytest.approx(0.0, abs=1e-12)
    phis = rng.random((6, 3)) + np.array([0, 1, 0])
    lam_zero = fit_calibration_from_descriptors(phis, [3.0] * 6).lambda_auto == 0.0
    amap = AnomalyMap(rng.random((5, 5)).astype(np.float32), False, (5, 5))
    single = fit_calibration([amap], [1.0])
    _report(
        "C4",
        centered_ok and lam_zero and single.degenerate,
        f"phi=mu -> 0 for all {len(DISTANCE_KINDS)} kinds: {centered_ok}; "
        f"constant base -> lambda 0: {lam_zero}; n=1 degenerate flag: {single.degenerate}",
    )


def test_c5_metric_oracles(rng):
    n_sets = 0
    for _ in range(500):
        n = int(rng.integers(2, 13))
        scores = rng.integers(0, 5, n).astype(float) / 4.0
        labels = rng.integers(0, 2, n)
        sl = list(scores)
        ll = list(labels)
        if 0 < labels.sum() < n:
            assert auroc(ScoredSet(scores, labels)) == auroc_pairwise(sl, ll)
        if labels.sum() > 0:
            sset = ScoredSet(scores, labels)
            assert average_precision(sset) == average_precision_exhaustive(sl, ll)
            assert f1_max(sset) == f1_exhaustive(sl, ll)
        n_sets += 1
    derived_auroc = auroc(ScoredSet(np.array([0.1, 0.4, 0.35, 0.8]), np.array([0, 0, 1, 1])))
    derived_ap = average_precision(ScoredSet(np.array([3.0, 2.0, 1.0]), np.array([1, 0, 1])))
    ok = derived_auroc == 0.75 and abs(derived_ap - 5.0 / 6.0) < 1e-12
    _report(
        "C5",
        ok and n_sets == 500,
        f"500 random sets exact vs oracles; AUROC 0.75 and AP {derived_ap:.4f} reproduce",
    )


def _run_cli(args, env_extra, cwd):
    env = dict(os.environ)
    env.update(env_extra)
    proc = subprocess.run(
        [sys.executable, "-m", "structcore.cli", *args],
        capture_output=True, text=True, env=env, cwd=cwd,
    )
    assert proc.returncode == 0, proc.stderr
    return proc


def test_c6_determinism_across_thread_counts(structgap):
    outs = []
    for tag, threads in (("t1", "1"), ("t4", "4")):
        bdir = os.path.join(structgap["root"], f"bundles_{tag}")
        sfile = os.path.join(structgap["root"], f"scores_{tag}.json")
        env = {"NUMBA_NUM_THREADS": threads, "OMP_NUM_THREADS": threads}
        _run_cli(["fit", "--manifest", structgap["manifest"],
                  "--config", structgap["config"], "--out-dir", bdir],
                 env, structgap["root"])
        _run_cli(["score", "--manifest", structgap["manifest"],
                  "--bundle-dir", bdir, "--out", sfile],
                 env, structgap["root"])
        with open(sfile, "rb") as fh:
            outs.append(fh.read())
    identical = outs[0] == outs[1]
    _report(
        "C6",
        identical,
        f"fit+score with 1 vs 4 threads: score records byte-identical = {identical}",
    )


@pytest.fixture(scope="module")
def structgap_scores(structgap):
    bdir = os.path.join(structgap["root"], "bundles_main")
    rc = main(["fit", "--manifest", structgap["manifest"],
               "--config", structgap["config"], "--out-dir", bdir])
    assert rc == 0
    sfile = os.path.join(structgap["root"], "scores_main.json")
    rc = main(["score", "--manifest", structgap["manifest"],
               "--bundle-dir", bdir, "--out", sfile])
    assert rc == 0
    with open(sfile, "r", encoding="utf-8") as fh:
        return {"bundles": bdir, "doc": json.load(fh)}


def test_c7_structural_gap_reproduction(structgap_scores):
    recs = structgap_scores["doc"]["records"]
    labels = [1 if r["label"] == "anomalous" else 0 for r in recs]
    base = [r["s_base"] for r in recs]
    hyb = [r["s_hyb"] for r in recs]
    assert labels.count(1) == 100 and labels.count(0) == 100
    base_auroc = auroc(ScoredSet(np.array(base), np.array(labels)))
    hyb_auroc = auroc(ScoredSet(np.array(hyb), np.array(labels)))
    # frozen margins re-verified against the brute-force pairwise oracle
    assert base_auroc == auroc_pairwise(base, labels)
    assert hyb_auroc == auroc_pairwise(hyb, labels)
    _report(
        "C7",
        base_auroc <= 0.65 and hyb_auroc >= 0.95,
        f"base AUROC {base_auroc:.4f} (<= 0.65), hybrid AUROC {hyb_auroc:.4f} (>= 0.95)",
    )


def test_c8_routing(tmp_path, rng):
    data = tmp_path / "routing"
    synth.generate_routing(str(data), seed=42)
    config = PipelineConfig.from_json_file(data / "pipeline_config.json")
    man = load_manifest(data / "manifest.json")
    groups = group_by_category(load_split_feature_sets(man, "train"))
    bundles = {c: fit_category(c, fs, config) for c, fs in groups.items()}
    # anchors are orthogonal: normalized-space separation sqrt(2) >= 1.0
    ok = 0
    pairs = load_split_feature_sets(man, "test")
    w_cache = {}
    for entry, fs in pairs:
        res = score_image(fs, bundles, w_cache=w_cache)
        ok += res.routed_category == entry.category
    accuracy = ok / len(pairs)
    banks = [b.routing_bank for b in bundles.values()]
    patches = rng.standard_normal((40, config.proj_out_dim)).astype(np.float32)
    ref_cat, ref_scores = route(patches, banks)
    scale_ok = True
    for alpha in (0.1, 1.0, 10.0):
        cat, scores = route((alpha * patches).astype(np.float32), banks)
        scale_ok &= cat == ref_cat
        scale_ok &= all(
            math.isclose(scores[c], ref_scores[c], rel_tol=1e-4, abs_tol=1e-6)
            for c in scores
        )
    _report(
        "C8",
        accuracy == 1.0 and scale_ok,
        f"routing accuracy {accuracy:.0%} (= 100%), scale invariance over "
        f"alpha in {{0.1, 1, 10}}: {scale_ok}",
    )


@pytest.mark.skip(
    reason="C10 (secondary): benchmark replication needs MVTec AD / VisA image "
    "datasets plus DINOv2 backbone weights, neither of which is available at "
    "desk scale. The primary suite passes with this criterion skipped."
)
def test_c10_benchmark_replication():
    pass


def test_c9_localization_untouched(structgap, structgap_scores):
    maps_a = os.path.join(structgap["root"], "maps_auto")
    maps_b = os.path.join(structgap["root"], "maps_off")
    common = ["--manifest", structgap["manifest"],
              "--bundle-dir", structgap_scores["bundles"]]
    rc = main(["score", *common, "--out", os.path.join(structgap["root"], "sa.json"),
               "--maps-dir", maps_a])
    assert rc == 0
    rc = main(["score", *common, "--out", os.path.join(structgap["root"], "sb.json"),
               "--maps-dir", maps_b, "--lambda-fixed", "0.0"])
    assert rc == 0
    names = sorted(n for n in os.listdir(maps_a) if n.endswith(".f32"))
    assert len(names) == 200
    identical = all(
        open(os.path.join(maps_a, n), "rb").read() == open(os.path.join(maps_b, n), "rb").read()
        for n in names
    )
    _report(
        "C9",
        identical,
        f"anomaly map bytes identical with structural scoring on vs off "
        f"({len(names)} maps): {identical}",
    )
