"""Acceptance suite.

One test per release criterion, each printing a pass line once its
assertions hold (run with ``pytest -v -s tests/test_acceptance.py`` to see
them). Tolerances and runtime budgets are pinned here, not configurable.
"""

import json
import math
import sys
import time

import numpy as np

from b2n import schemas
from b2n.chipper import lift, plan_grid
from b2n.cli import main
from b2n.colorxfer import apply_color_map, fit_color_map
from b2n.evaluator import (ap50, match, max_recall_at_imprecision, pr_curve)
from b2n.fusion import (ZERO_SHOT_MIN, FusionModel, IDENTITY_NORMALIZER,
                        LOWER_LEFT, UPPER_RIGHT, apply_fusion, ensemble_scores,
                        fit_fusion, fit_kde, lower_left_envelope,
                        upper_right_envelope)
from b2n.geodata import (AffineGeoTransform, AnnotationSet, Detection, GeoBox,
                         iou)
from b2n.nms import suppress
from b2n.raster import ImageBuffer
from b2n.reps import rep_canny, rep_laplacian
from b2n.simharness import ClassifierProfile, SimProfile, simulate


def _report(number: int, name: str) -> None:
    print(f"[criterion {number:02d}] {name}: PASS")


# -----------------------------------------------------------------------------
# 1. Envelope sweeps equal O(G^4) brute force bitwise on 200 random KDE grids.


def test_criterion_01_envelope_oracle_equivalence():
    start = time.monotonic()
    rng = np.random.default_rng(101)
    for _ in range(200):
        size = int(rng.integers(2, 33))
        n_pts = int(rng.integers(1, 20))
        pts = rng.uniform(0.1, 0.9, size=(n_pts, 2))
        surf = fit_kde(pts, grid_size=size, domain=(0.0, 1.0),
                       bandwidth=float(rng.uniform(0.02, 0.3)))
        ur = upper_right_envelope(surf).grid
        ll = lower_left_envelope(surf).grid
        brute_ur = np.empty_like(surf.grid)
        brute_ll = np.empty_like(surf.grid)
        for i in range(size):
            for j in range(size):
                brute_ur[i, j] = surf.grid[i:, j:].max()
                brute_ll[i, j] = surf.grid[:i + 1, :j + 1].max()
        assert np.array_equal(ur, brute_ur)
        assert np.array_equal(ll, brute_ll)
    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"envelope oracle took {elapsed:.1f}s"
    _report(1, "envelope sweeps equal brute force bitwise")


# -----------------------------------------------------------------------------
# 2. Ensemble monotonicity over 1000 random fitted models x 1000 pairs.


def test_criterion_02_ensemble_monotonicity():
    start = time.monotonic()
    rng = np.random.default_rng(202)
    for trial in range(1000):
        n_neg = int(rng.integers(3, 15))
        neg = rng.normal(rng.uniform(-2, 2), rng.uniform(0.2, 2.0),
                         size=(n_neg, 2))
        if np.ptp(neg[:, 0]) == 0 or np.ptp(neg[:, 1]) == 0:
            continue
        pos = None
        if trial % 2:
            pos = rng.normal(rng.uniform(-1, 3), rng.uniform(0.2, 1.5),
                             size=(int(rng.integers(2, 10)), 2))
        model = fit_fusion(neg, pos, grid_size=16)
        s = rng.uniform(-4, 4, size=(1000, 2))
        step = rng.uniform(0, 3, size=(1000, 2))
        e_lo = ensemble_scores(model, s[:, 0], s[:, 1])
        e_hi = ensemble_scores(model, s[:, 0] + step[:, 0], s[:, 1] + step[:, 1])
        assert (e_hi >= e_lo - 1e-9).all()
    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"monotonicity sweep took {elapsed:.1f}s"
    _report(2, "ensemble score monotone in both scores (1e-9)")


# -----------------------------------------------------------------------------
# 3. Zero-shot rule: ranking by E equals ranking by min(s_D, s_C), tau = 1.


def _kendall_tau(a: np.ndarray, b: np.ndarray) -> float:
    da = np.sign(a[:, None] - a[None, :])
    db = np.sign(b[:, None] - b[None, :])
    upper = np.triu_indices(len(a), k=1)
    prod = (da * db)[upper]
    return float(prod.sum() / len(prod))


def test_criterion_03_zero_shot_min_rule():
    neg = [(0.0, 0.0), (1e-3, 1e-3), (4e-4, 7e-4)]
    model = fit_fusion(neg, grid_size=64, bandwidth=1e-3)
    rng = np.random.default_rng(303)
    raw = rng.uniform(1.05e-3, 1.2e-3, size=(500, 2))
    e = ensemble_scores(model, raw[:, 0], raw[:, 1])
    x, y = model.normalizer.normalize(raw[:, 0], raw[:, 1])
    min_rank = np.minimum(x, y)
    assert _kendall_tau(e, min_rank) == 1.0
    _report(3, "zero-shot ranking equals min(s_D, s_C), Kendall tau = 1")


# -----------------------------------------------------------------------------
# 4. Evaluation protocol: duplicate rule, greedy oracle, threshold-scan oracle.


def _oracle_greedy(preds, gts, thr):
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].s_d, i))
    taken = set()
    out = []
    for i in order:
        candidates = [(iou(preds[i].box, g), j) for j, g in enumerate(gts)
                      if j not in taken and iou(preds[i].box, g) >= thr]
        if candidates:
            best = max(candidates, key=lambda t: (t[0], -t[1]))
            taken.add(best[1])
            out.append((True, best[1]))
        else:
            out.append((False, None))
    return out


def _random_instance(rng):
    n_gt = int(rng.integers(1, 15))
    gts, preds = [], []
    for _ in range(n_gt):
        x, y = rng.uniform(0, 100, size=2)
        w, h = rng.uniform(4, 14, size=2)
        gts.append(GeoBox(x, y, x + w, y + h))
    for _ in range(int(rng.integers(0, 25))):
        if rng.random() < 0.6:
            base = gts[int(rng.integers(len(gts)))]
            dx, dy = rng.normal(0, 3.0, size=2)
            box = GeoBox(base.xmin + dx, base.ymin + dy,
                         base.xmax + dx, base.ymax + dy)
        else:
            x, y = rng.uniform(0, 100, size=2)
            box = GeoBox(x, y, x + rng.uniform(4, 14), y + rng.uniform(4, 14))
        preds.append(Detection(box, s_d=float(rng.uniform())))
    return preds, gts


def test_criterion_04_evaluation_protocol():
    # duplicate predictions at one ground truth: TP + FP, AP50 = 1.0
    gt = [GeoBox(0, 0, 10, 10)]
    preds = [Detection(GeoBox(0, 0, 10, 10), s_d=0.9),
             Detection(GeoBox(1, 0, 11, 10), s_d=0.8)]
    records, _ = match(preds, gt, 0.5)
    assert [r.is_tp for r in records] == [True, False]
    assert ap50(records, 1) == 1.0

    rng = np.random.default_rng(404)
    for _ in range(1000):
        preds, gts = _random_instance(rng)
        records, _ = match(preds, gts, 0.5)
        assert [(r.is_tp, r.matched_gt) for r in records] == \
            _oracle_greedy(preds, gts, 0.5)
        # max recall at bounded imprecision equals a full threshold scan
        for budget in (1.0, 100.0):
            floor = 1.0 / (1.0 + budget)
            best = 0.0
            for t in {r.rank_score for r in records}:
                sub = [r for r in records if r.rank_score >= t]
                tp = sum(r.is_tp for r in sub)
                if tp / len(sub) >= floor:
                    best = max(best, tp / len(gts))
            assert max_recall_at_imprecision(records, len(gts), budget) == best
    _report(4, "matching, duplicate-as-FP, AP50 and recall scans equal oracles")


# -----------------------------------------------------------------------------
# 5. Broad-to-narrow beats end-to-end on the seeded simulation.


def _study_annotations(rng, n_target=200, n_off=200):
    boxes = []
    k = 0
    for label, count in (("tanker", n_target), ("cargo", n_off)):
        for _ in range(count):
            x = (k % 40) * 50.0
            y = (k // 40) * 50.0
            boxes.append(GeoBox(x, y, x + 12.0, y + 12.0, label))
            k += 1
    return AnnotationSet("study", tuple(boxes))


def test_criterion_05_broad_to_narrow_superiority():
    start = time.monotonic()
    rng = np.random.default_rng(505)
    anns = _study_annotations(rng)
    target_gt = [b for b in anns.gt if b.class_label == "tanker"]
    area = 4.0

    classifier = ClassifierProfile("tanker", target=(1.0, 0.5),
                                   off_class=(0.0, 0.5), background=(0.0, 0.5))
    broad = SimProfile(recall_ceiling=0.95, loc_jitter_sigma=0.5,
                       tp_score=(2.0, 1.0), fp_rate=50.0, fp_score=(-1.0, 1.0),
                       classifier=classifier, seed=7)
    e2e = SimProfile(recall_ceiling=0.60, loc_jitter_sigma=0.5,
                     tp_score=(2.0, 1.0), fp_rate=50.0, fp_score=(-1.0, 1.0),
                     seed=8)

    # fit zero-shot fusion on an independent validation draw
    val_dets = simulate(anns, area, SimProfile(
        recall_ceiling=0.95, loc_jitter_sigma=0.5, tp_score=(2.0, 1.0),
        fp_rate=50.0, fp_score=(-1.0, 1.0), classifier=classifier, seed=9))
    val_records, _ = match(val_dets, target_gt, 0.5)
    neg_pairs = [(r.detection.s_d, r.detection.s_c)
                 for r in val_records if not r.is_tp]
    model = fit_fusion(neg_pairs, pos=None, grid_size=128)

    broad_dets = suppress(simulate(anns, area, broad), 0.5)
    fused = apply_fusion(model, broad_dets)
    fused_records, _ = match(fused, target_gt, 0.5,
                             key=lambda d: d.fused)
    fused_ap = ap50(fused_records, len(target_gt))

    e2e_anns = AnnotationSet("study-e2e", tuple(target_gt))
    e2e_dets = suppress(simulate(e2e_anns, area, e2e), 0.5)
    e2e_records, _ = match(e2e_dets, target_gt, 0.5)
    e2e_ap = ap50(e2e_records, len(target_gt))

    broad_records, _ = match(broad_dets, target_gt, 0.5)
    broad_recall = max_recall_at_imprecision(broad_records, len(target_gt), 100)
    e2e_recall = max_recall_at_imprecision(e2e_records, len(target_gt), 100)

    assert fused_ap >= e2e_ap + 0.10, f"fused {fused_ap:.3f} vs e2e {e2e_ap:.3f}"
    assert broad_recall >= e2e_recall + 0.2, \
        f"broad {broad_recall:.3f} vs e2e {e2e_recall:.3f}"
    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"simulation study took {elapsed:.1f}s"
    _report(5, f"broad-to-narrow AP {fused_ap:.2f} > end-to-end {e2e_ap:.2f} + 0.10; "
               f"recall {broad_recall:.2f} > {e2e_recall:.2f} + 0.2")


# -----------------------------------------------------------------------------
# 6. Chip round trip at 768 px / 20% overlap: AP50 = 1.0, no surviving duplicates.


def test_criterion_06_chip_round_trip():
    transform = AffineGeoTransform(30000.0, 0.3, 0.0, 60000.0, 0.0, -0.3)
    rng = np.random.default_rng(606)
    world_gt = []
    for k in range(60):
        col = (k % 8) * 180.0 + rng.uniform(0, 40)
        row = (k // 8) * 180.0 + rng.uniform(0, 40)
        w, h = rng.uniform(15, 90, size=2)
        x0, y0 = transform.pixel_to_world(col, row)
        x1, y1 = transform.pixel_to_world(col + w, row + h)
        world_gt.append(GeoBox(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1)))

    grid = plan_grid((1500, 1500), 768, 0.2, transform=transform)
    lifted = []
    for chip in grid.chips:
        per_chip = []
        for gt_box in world_gt:
            c0, r0 = chip.transform.world_to_pixel(gt_box.xmin, gt_box.ymax)
            c1, r1 = chip.transform.world_to_pixel(gt_box.xmax, gt_box.ymin)
            if 0 <= min(c0, r0) and c1 <= chip.col1 - chip.col0 and \
                    r1 <= chip.row1 - chip.row0:
                per_chip.append(Detection(GeoBox(c0, r0, c1, r1), s_d=1.0))
        lifted.extend(lift(per_chip, chip))
    assert len(lifted) > len(world_gt), "overlap should duplicate detections"

    stitched = suppress(lifted, 0.5)
    for i in range(len(stitched)):
        for j in range(i + 1, len(stitched)):
            assert iou(stitched[i].box, stitched[j].box) < 0.5
    records, unmatched = match(stitched, world_gt, 0.5)
    assert unmatched == 0
    assert ap50(records, len(world_gt)) == 1.0
    _report(6, "chip/lift/stitch round trip gives AP50 = 1.0, no duplicates")


# -----------------------------------------------------------------------------
# 7. KDE sanity: analytic single-kernel peak and unit-ish grid integral.


def test_criterion_07_kde_sanity():
    grid_size, domain, h = 512, (-0.25, 1.25), 0.1
    step = (domain[1] - domain[0]) / grid_size
    center = domain[0] + (255 + 0.5) * step  # an exact cell center
    surf = fit_kde([(center, center)], grid_size, domain, bandwidth=h)
    peak = 1.0 / (2.0 * math.pi * h * h)
    i = j = 255
    assert abs(surf.grid[i, j] - peak) / peak < 1e-3
    assert surf.grid.max() == surf.grid[i, j]
    assert 0.95 <= surf.riemann_integral() <= 1.0

    rng = np.random.default_rng(707)
    for _ in range(5):
        pts = rng.uniform(0.25, 0.75, size=(int(rng.integers(5, 60)), 2))
        fitted = fit_kde(pts, grid_size=256)
        assert 0.95 <= fitted.riemann_integral() <= 1.0
    _report(7, "KDE peak 1/(2 pi hx hy) within 0.1%, integral in [0.95, 1.0]")


# -----------------------------------------------------------------------------
# 8. Color transfer: refit statistics land on the style target.


def test_criterion_08_color_transfer():
    rng = np.random.default_rng(808)

    def cloud(mean, spread, n=6000):
        cov = rng.uniform(-0.3, 0.3, size=(3, 3))
        cov = cov @ cov.T + np.eye(3)
        return np.clip(rng.multivariate_normal(mean, cov * spread, size=n), 0, 255)

    content_px = cloud((70, 85, 110), 30)
    style_px = cloud((150, 135, 95), 55)
    side = int(np.sqrt(len(content_px)))
    content = ImageBuffer.from_array(
        content_px[:side * side].reshape(side, side, 3).astype(np.uint8))
    cmap = fit_color_map(content.data.reshape(-1, 3).astype(np.float64), style_px)
    out = apply_color_map(cmap, content).data.reshape(-1, 3).astype(np.float64)
    assert np.abs(out.mean(axis=0) - style_px.mean(axis=0)).max() <= 2.0
    got = np.cov(out, rowvar=False)
    want = np.cov(style_px, rowvar=False)
    assert (np.abs(got - want) / np.abs(want).max()).max() <= 0.05

    ident = fit_color_map(content_px, content_px)
    assert np.abs(ident.matrix - np.eye(3)).max() < 1e-9
    _report(8, "transferred stats match style (2 counts / 5%); identity fit = I")


# -----------------------------------------------------------------------------
# 9. Representation functions: Laplacian stencil, ramp nulls, binary Canny.


def test_criterion_09_representation_functions():
    constant = ImageBuffer.full(32, 32, 3, 173)
    assert (rep_laplacian(constant).data == 0).all()

    ramp = ImageBuffer.from_array(np.tile(np.arange(64, dtype=np.uint8), (32, 1)))
    lap = rep_laplacian(ramp).data[:, :, 0]
    assert (lap[1:-1, 1:-1] == 0).all()  # second difference of linear is zero

    impulse = np.zeros((9, 9), dtype=np.uint8)
    impulse[4, 4] = 255
    out = rep_laplacian(ImageBuffer.from_array(impulse)).data[:, :, 0]
    expected = np.zeros((9, 9), dtype=np.uint8)
    expected[4, 4] = 255
    for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        expected[4 + dr, 4 + dc] = 255
    assert np.array_equal(out, expected)

    assert (rep_canny(constant).data == 0).all()
    rng = np.random.default_rng(909)
    noisy = ImageBuffer.from_array(rng.integers(0, 256, size=(48, 48),
                                                dtype=np.uint8))
    assert set(np.unique(rep_canny(noisy, 20, 60).data)) <= {0, 255}
    _report(9, "Laplacian stencil/nulls and binary Canny hold")


# -----------------------------------------------------------------------------
# 10. Every randomized CLI path is byte-identical under a repeated seed.


def test_criterion_10_cli_determinism(tmp_path):
    gt_path = tmp_path / "gt.json"
    boxes = [GeoBox(i * 40.0, 0.0, i * 40.0 + 10.0, 10.0, "car")
             for i in range(10)]
    schemas.save_annotations(gt_path, AnnotationSet("img", tuple(boxes)))
    (tmp_path / "profile.json").write_text(json.dumps(
        {"schema": "b2n/1", "recall_ceiling": 0.8, "fp_rate": 25.0,
         "loc_jitter_sigma": 1.0,
         "classifier": {"target_class": "car", "target": [2, 1],
                        "off_class": [-2, 1], "background": [-2, 1]}}))

    sprites = tmp_path / "sprites"
    sprites.mkdir()
    rgba = np.zeros((10, 16, 4), dtype=np.uint8)
    rgba[2:8, 2:14, :3] = 150
    rgba[2:8, 2:14, 3] = 255
    ImageBuffer(rgba).to_png(sprites / "unit.png")
    backgrounds = tmp_path / "bg"
    backgrounds.mkdir()
    ImageBuffer.full(96, 96, 3, 70).to_png(backgrounds / "b.png")
    files = tmp_path / "files"
    files.mkdir()
    for i in range(6):
        (files / f"f{i}.dat").write_bytes(b"data")

    paths = {
        "simulate": (["simulate", "--gt", str(gt_path), "--profile",
                      str(tmp_path / "profile.json"), "--area-mpx", "1.5",
                      "--seed", "21", "--out"], ["sim.json"]),
        "composite": (["composite", "--backgrounds", str(backgrounds),
                       "--sprites", str(sprites), "--class", "car",
                       "--count", "2", "--objects", "2", "--seed", "22",
                       "--out"], ["scene_00000.png", "scene_00000.gt.json",
                                  "scene_00001.png", "scene_00001.gt.json"]),
        "mix": (["mix", "--source", f"R={files}", "--counts", "R=4",
                 "--seed", "23", "--manifest-out"], ["manifest.json"]),
    }
    for name, (argv, outputs) in paths.items():
        blobs = []
        for run in ("a", "b"):
            out_dir = tmp_path / f"{name}_{run}"
            out_dir.mkdir()
            target = str(out_dir / outputs[0]) if name != "composite" \
                else str(out_dir)
            assert main(argv + [target]) == 0
            blobs.append([(out_dir / f).read_bytes() for f in outputs])
        assert blobs[0] == blobs[1], f"{name} outputs differ across runs"
    _report(10, "randomized CLI paths byte-identical under repeated seeds")
