"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with `pytest tests/test_acceptance.py -v -s`).

Criterion 1 is expected to FAIL on one sub-check: the reference total for
the air-yolo backbone (911,426) is arithmetically inconsistent with its
own per-layer reference counts, which are all reproduced exactly and sum
to 911,456. The check asserts the stated total as published rather than
papering over the 30-parameter discrepancy.
"""

import json
import time

import numpy as np
import pytest

from jddl.backbone import backbone_summary, builtin_backbone, reduction_ratio
from jddl.boxes import CenterBox
from jddl.cli import main
from jddl.geometry import CameraIntrinsics, CameraPose, back_project, build_projection, project_point
from jddl.losses import (
    LOSS_IDS,
    ciou_alpha,
    ciou_loss,
    inner_ciou_loss,
    inner_iou,
    iou,
    loss_gradient,
    regress_box,
    sample_box_pair,
    steps_until,
)
from jddl.metrics import average_precision, evaluate
from jddl.annotations import (
    AIRSD_CLASSES,
    parse_coco,
    parse_yolo,
    write_coco,
    write_yolo,
)

from _reference import ref_evaluate
from conftest import (
    SWEEP_RIG,
    fd_gradient,
    gradcheck_ok,
    loss_closure,
    random_rotation,
    sample_differentiable_case,
)
from test_backbone import AIR_YOLO_PARAMS, YOLOV8N_PARAMS
from test_metrics import _random_instance
from test_annotations import build_fixture_set


def _report(criterion: int, ok: bool, detail: str) -> None:
    print(f"[acceptance {criterion}] {'PASS' if ok else 'FAIL'} - {detail}")


def test_criterion_1_backbone_table_exactness(tmp_path):
    started = time.monotonic()
    payloads = {}
    for name in ("yolov8n", "air-yolo"):
        out = tmp_path / f"{name}.json"
        assert main(["params", "--builtin", name, "--json", str(out)]) == 0
        payloads[name] = json.loads(out.read_text())
    elapsed = time.monotonic() - started

    yolo_rows = tuple(r["params"] for r in payloads["yolov8n"]["rows"])
    air_rows = tuple(r["params"] for r in payloads["air-yolo"]["rows"])
    reduction = payloads["air-yolo"]["baseline"]["reduction"]

    cells_ok = yolo_rows == YOLOV8N_PARAMS and air_rows == AIR_YOLO_PARAMS
    yolo_sum_ok = payloads["yolov8n"]["total"] == 1_272_656
    reduction_ok = 0.25 <= reduction <= 0.32
    air_sum_ok = payloads["air-yolo"]["total"] == 911_426
    ok = cells_ok and yolo_sum_ok and reduction_ok and air_sum_ok and elapsed < 1.0
    _report(
        1,
        ok,
        f"20/20 per-row counts exact={cells_ok}, yolov8n sum 1,272,656={yolo_sum_ok}, "
        f"reduction {100 * reduction:.2f}% in [25,32]={reduction_ok}, "
        f"air-yolo stated sum 911,426={air_sum_ok} "
        f"(computed {payloads['air-yolo']['total']}; the stated total is inconsistent "
        f"with its own per-row counts by 30) ({elapsed:.2f}s < 1s)",
    )
    assert cells_ok
    assert yolo_sum_ok
    assert reduction_ok
    assert elapsed < 1.0
    # inconsistent published total, kept as stated: 911,426 != sum of the
    # published per-row counts (911,456); see the repo docs
    assert payloads["air-yolo"]["total"] == 911_426, (
        "air-yolo total is the sum of its (exactly reproduced) per-row counts, "
        f"{payloads['air-yolo']['total']}; the stated reference total 911,426 "
        "differs by 30 and cannot hold simultaneously with the per-row counts"
    )


def test_criterion_2_inner_iou_degeneracy():
    started = time.monotonic()
    rng = np.random.default_rng(2002)
    centers = rng.uniform(-5, 5, size=(100_000, 4))
    sizes = rng.uniform(0.1, 5.0, size=(100_000, 4))
    worst_iou = 0.0
    worst_loss = 0.0
    for k in range(100_000):
        a = CenterBox(centers[k, 0], centers[k, 1], sizes[k, 0], sizes[k, 1])
        b = CenterBox(centers[k, 2], centers[k, 3], sizes[k, 2], sizes[k, 3])
        worst_iou = max(worst_iou, abs(inner_iou(a, b, 1.0) - iou(a, b)))
        worst_loss = max(worst_loss, abs(inner_ciou_loss(a, b, 1.0) - ciou_loss(a, b)))
    elapsed = time.monotonic() - started
    ok = worst_iou <= 1e-12 and worst_loss <= 1e-12 and elapsed < 5.0
    _report(
        2,
        ok,
        f"1e5 pairs: max |inner_iou(r=1)-iou|={worst_iou:.2e}, "
        f"max |inner_ciou(r=1)-ciou|={worst_loss:.2e} (both <= 1e-12) ({elapsed:.2f}s < 5s)",
    )
    assert worst_iou <= 1e-12
    assert worst_loss <= 1e-12
    assert elapsed < 5.0


def test_criterion_3_gradient_correctness():
    started = time.monotonic()
    rng = np.random.default_rng(3003)
    n_samples = 10_000
    failures = 0
    for _ in range(n_samples):
        pred, gt, ratio = sample_differentiable_case(rng)
        alpha = ciou_alpha(pred, gt)
        for loss_id in LOSS_IDS:
            analytic = loss_gradient(loss_id, pred, gt, ratio)
            numeric = fd_gradient(loss_closure(loss_id, gt, ratio, alpha), pred)
            if not gradcheck_ok(analytic, numeric):
                failures += 1
    elapsed = time.monotonic() - started
    ok = failures == 0 and elapsed < 30.0
    _report(
        3,
        ok,
        f"{n_samples} samples x {len(LOSS_IDS)} losses, analytic vs central differences "
        f"at 1e-4 relative: {failures} failures ({elapsed:.1f}s < 30s)",
    )
    assert failures == 0
    assert elapsed < 30.0


def _median_steps_to_target(loss_id, ratio, iou_range, n_trials, base_seed, steps, lr):
    counts = []
    for trial in range(n_trials):
        rng = np.random.default_rng(base_seed + trial)
        init, gt = sample_box_pair(rng, iou_range)
        traj = regress_box(init, gt, loss_id, ratio, steps=steps, learning_rate=lr)
        reached = steps_until(traj, 0.9)
        counts.append(steps + 1 if reached is None else reached)
    return float(np.median(counts))


def test_criterion_4_ratio_convergence_direction():
    started = time.monotonic()
    low_fast = _median_steps_to_target("inner_ciou", 1.25, (0.0, 0.2), 100, 4004, 800, 0.05)
    low_base = _median_steps_to_target("inner_ciou", 1.0, (0.0, 0.2), 100, 4004, 800, 0.05)
    high_fast = _median_steps_to_target("inner_ciou", 0.75, (0.7, 1.0), 100, 4014, 800, 0.05)
    high_base = _median_steps_to_target("inner_ciou", 1.0, (0.7, 1.0), 100, 4014, 800, 0.05)
    elapsed = time.monotonic() - started
    ok = low_fast <= low_base and high_fast <= high_base and elapsed < 60.0
    _report(
        4,
        ok,
        f"median steps to IoU>=0.9 -- low-IoU starts: ratio 1.25 {low_fast:.0f} <= "
        f"ratio 1.0 {low_base:.0f}; high-IoU starts: ratio 0.75 {high_fast:.0f} <= "
        f"ratio 1.0 {high_base:.0f} (directional only) ({elapsed:.1f}s < 60s)",
    )
    assert low_fast <= low_base
    assert high_fast <= high_base
    assert elapsed < 60.0


def test_criterion_5_projection_round_trip():
    started = time.monotonic()
    rng = np.random.default_rng(5005)
    worst = 0.0
    for _ in range(10_000):
        intrinsics = CameraIntrinsics(*rng.uniform(50, 2000, 2), *rng.uniform(-100, 1100, 2))
        pose = CameraPose(random_rotation(rng), rng.uniform(-5, 5, 3))
        depth = rng.uniform(0.1, 100.0)
        x_cam = np.array([rng.uniform(-1, 1) * depth, rng.uniform(-1, 1) * depth, depth])
        x_world = pose.R.T @ (x_cam - pose.T)
        pixel = project_point(build_projection(intrinsics, pose), x_world)
        err = np.linalg.norm(back_project(intrinsics, pose, pixel) - x_world)
        worst = max(worst, err / (1.0 + np.linalg.norm(x_world)))
    elapsed = time.monotonic() - started
    ok = worst <= 1e-6 and elapsed < 5.0
    _report(
        5,
        ok,
        f"1e4 random pose/point pairs, worst relative round-trip error {worst:.2e} <= 1e-6 "
        f"({elapsed:.1f}s < 5s)",
    )
    assert worst <= 1e-6
    assert elapsed < 5.0


def test_criterion_6_localization_end_to_end(fuselage_sweep):
    pairs = fuselage_sweep.pairs
    worst_precision = min(p.precision for p in pairs)
    worst_recall = min(p.recall for p in pairs)
    worst_parity = max(p.parity_max_abs for p in pairs)
    elapsed = fuselage_sweep.duration_s
    ok = (
        90_000 <= fuselage_sweep.n_points_per_scene <= 130_000
        and SWEEP_RIG.count == 4
        and len(pairs) >= 350
        and worst_precision >= 0.95
        and worst_recall >= 0.95
        and worst_parity <= 1e-6
        and elapsed < 120.0
    )
    _report(
        6,
        ok,
        f"100 scenes x {fuselage_sweep.n_points_per_scene} points, 4-camera rig, "
        f"{len(pairs)} patch localizations: worst precision {worst_precision:.4f} >= 0.95, "
        f"worst recall {worst_recall:.4f} >= 0.95, mode parity {worst_parity:.1e} <= 1e-6 "
        f"({elapsed:.1f}s < 120s)",
    )
    assert 90_000 <= fuselage_sweep.n_points_per_scene <= 130_000
    assert SWEEP_RIG.count == 4
    assert len(pairs) >= 350
    for pair in pairs:
        assert pair.precision >= 0.95, pair
        assert pair.recall >= 0.95, pair
        assert pair.parity_max_abs <= 1e-6, pair
    assert elapsed < 120.0


@pytest.mark.filterwarnings("ignore:detections scored against zero ground truths")
def test_criterion_7_metrics_oracle_equivalence():
    started = time.monotonic()
    rng = np.random.default_rng(7007)
    n_cases = 1200
    for _ in range(n_cases):
        dets, gts = _random_instance(rng)
        report = evaluate(dets, gts, 0.5)
        ref = ref_evaluate(
            [(d.image_id, d.class_id, d.box.as_tuple(), d.confidence) for d in dets],
            [(g.image_id, g.class_id, g.box.as_tuple()) for g in gts],
            0.5,
        )
        assert abs(report.precision - ref["p"]) <= 1e-12
        assert abs(report.recall - ref["r"]) <= 1e-12
        assert abs(report.f1 - ref["f1"]) <= 1e-12
        if ref["map"] is None:
            assert not report.map_defined
        else:
            assert abs(report.map - ref["map"]) <= 1e-12
        for metrics in report.per_class:
            ref_cls = ref["per_class"][metrics.class_id]
            assert (metrics.counts.tp, metrics.counts.fp, metrics.counts.fn) == (
                ref_cls["tp"],
                ref_cls["fp"],
                ref_cls["fn"],
            )
            if metrics.ap is None:
                assert ref_cls["ap"] is None
            else:
                assert abs(metrics.ap - ref_cls["ap"]) <= 1e-12
    ap_fixture = average_precision([True, False, True], 2)
    fixture_ok = abs(ap_fixture - (0.5 * 1.0 + 0.5 * (2 / 3))) <= 1e-9
    elapsed = time.monotonic() - started
    ok = fixture_ok and elapsed < 30.0
    _report(
        7,
        ok,
        f"{n_cases} enumerated small instances match the naive reference evaluator to 1e-12; "
        f"hand-computed AP fixture {ap_fixture:.10f} == 5/6 to 1e-9 ({elapsed:.1f}s < 30s)",
    )
    assert fixture_ok
    assert elapsed < 30.0


def test_criterion_8_annotation_round_trips(tmp_path):
    started = time.monotonic()
    aset = build_fixture_set()
    assert aset.class_map == AIRSD_CLASSES and len(AIRSD_CLASSES) == 11

    def normalized_rows(yolo_dir):
        rows = {}
        for label in sorted(yolo_dir.glob("*.txt")):
            parsed = [
                (line.split()[0], tuple(float(v) for v in line.split()[1:]))
                for line in label.read_text().splitlines()
            ]
            rows[label.name] = sorted(parsed)
        return rows

    # yolo -> coco -> yolo
    first = tmp_path / "yolo1"
    write_yolo(aset, first)
    mid = write_coco(parse_yolo(first, first / "index.csv"), tmp_path / "mid.json")
    second = tmp_path / "yolo2"
    write_yolo(parse_coco(mid), second)
    rows1, rows2 = normalized_rows(first), normalized_rows(second)
    assert set(rows1) == set(rows2)
    worst_yolo = 0.0
    for name in rows1:
        for (c1, v1), (c2, v2) in zip(rows1[name], rows2[name]):
            assert c1 == c2
            worst_yolo = max(worst_yolo, max(abs(a - b) for a, b in zip(v1, v2)))

    # coco -> yolo -> coco, compared in normalized coordinates
    coco1 = write_coco(aset, tmp_path / "c1.json")
    yolo_mid = tmp_path / "yolo_mid"
    write_yolo(parse_coco(coco1), yolo_mid)
    coco2 = write_coco(parse_yolo(yolo_mid, yolo_mid / "index.csv"), tmp_path / "c2.json")

    def normalized_coco(path):
        data = json.loads(path.read_text())
        sizes = {img["id"]: (img["width"], img["height"]) for img in data["images"]}
        stems = {img["id"]: img["file_name"].rsplit(".", 1)[0] for img in data["images"]}
        rows = []
        for ann in data["annotations"]:
            w, h = sizes[ann["image_id"]]
            x0, y0, bw, bh = ann["bbox"]
            rows.append(
                (stems[ann["image_id"]], ann["category_id"], (x0 / w, y0 / h, bw / w, bh / h))
            )
        return sorted(rows)

    worst_coco = 0.0
    for (s1, c1, v1), (s2, c2, v2) in zip(normalized_coco(coco1), normalized_coco(coco2)):
        assert (s1, c1) == (s2, c2)
        worst_coco = max(worst_coco, max(abs(a - b) for a, b in zip(v1, v2)))

    elapsed = time.monotonic() - started
    ok = worst_yolo <= 1e-6 and worst_coco <= 1e-6 and elapsed < 5.0
    _report(
        8,
        ok,
        f"11-class fixture round trips: yolo->coco->yolo max drift {worst_yolo:.2e}, "
        f"coco->yolo->coco max drift {worst_coco:.2e} (both <= 1e-6 normalized) "
        f"({elapsed:.2f}s < 5s)",
    )
    assert worst_yolo <= 1e-6
    assert worst_coco <= 1e-6
    assert elapsed < 5.0


def test_criterion_9_out_of_scope_results_are_substituted(tmp_path):
    # Detection-quality numbers (65.2% mAP, the ablation/per-class tables,
    # 110 FPS, manual-inspection timing) require a trained network, real
    # imagery, and the capture rig; they are not reproducible here. The
    # loss comparison harness reproduces the comparison's *structure* only.
    out = tmp_path / "bench.csv"
    code = main(
        [
            "loss-bench",
            "--losses", "giou,diou,ciou,inner_ciou",
            "--ratios", "1.0,1.25",
            "--trials", "3",
            "--steps", "150",
            "--out", str(out),
        ]
    )
    assert code == 0
    rows = out.read_text().splitlines()
    losses_seen = {line.split(",")[0] for line in rows[1:]}
    ok = losses_seen == {"giou", "diou", "ciou", "inner_ciou"}
    _report(
        9,
        ok,
        "trained-detector results are out of desk scope by design; substituted by "
        "criteria 1-8 plus the loss-comparison harness structure "
        f"(bench rows cover {sorted(losses_seen)})",
    )
    assert ok
