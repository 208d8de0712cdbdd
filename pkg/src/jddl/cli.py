"""Command-line interface.

Subcommands: localize, eval, params, loss-bench, dataset, simulate.
Exit codes: 0 success, 2 input validation failure, 3 internal error.
Every command that writes artifacts also writes a run manifest
(<output>.manifest.json or manifest.json in the output directory)
recording the command, inputs, options, tool version, and wall-clock
duration. All randomness flows from explicit --seed flags; the
JDDL_THREADS environment variable caps internal worker threads.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .annotations import (
    AIRSD_CLASSES,
    AnnotationSet,
    ImageInfo,
    convert,
    dataset_stats,
    parse_coco,
    parse_yolo,
    write_coco,
)
from .backbone import (
    BUILTIN_NAMES,
    backbone_summary,
    builtin_backbone,
    parse_backbone_spec,
    reduction_ratio,
    summary_markdown,
)
from .boxes import BBox2D
from .cloud import read_point_cloud, write_ply
from .geometry import load_camera_json, save_camera_json
from .localization import (
    LocalizationOptions,
    localize_damage,
    write_colored_cloud,
    write_report_json,
)
from .losses import regress_box, sample_box_pair, steps_until
from .metrics import (
    GroundTruthRecord,
    evaluate,
    load_detections_json,
    report_markdown,
    report_to_dict,
)
from .simulator import (
    generate_camera_ring,
    generate_scene,
    ground_truth_bbox,
    load_scene_config,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTERNAL = 3


def _max_workers(n_tasks: int) -> int:
    cap = os.environ.get("JDDL_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n_tasks, limit))


def _write_manifest(
    target: Path, command: str, inputs: dict, options: dict, started: float
) -> None:
    manifest = {
        "command": command,
        "inputs": inputs,
        "options": options,
        "version": __version__,
        "duration_s": time.monotonic() - started,
    }
    if target.is_dir():
        path = target / "manifest.json"
    else:
        path = target.with_name(target.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# --- localize ---------------------------------------------------------------


def _cmd_localize(args: argparse.Namespace) -> int:
    started = time.monotonic()
    dets = load_detections_json(args.detections)
    intrinsics, pose = load_camera_json(args.camera)
    cloud = read_point_cloud(args.cloud)
    options = LocalizationOptions(
        occlusion_culling=args.occlusion == "on",
        zbuffer_cell=args.zbuffer_cell,
        depth_tolerance=args.depth_tolerance,
        selection_mode=args.mode,
    )

    def run(det):
        return localize_damage(det.box, intrinsics, pose, cloud, options, class_id=det.class_id)

    if dets:
        with ThreadPoolExecutor(max_workers=_max_workers(len(dets))) as pool:
            results = list(pool.map(run, dets))
    else:
        results = []
    out = Path(args.out)
    write_report_json(out, results)
    if args.colored:
        write_colored_cloud(args.colored, cloud, results)
    _write_manifest(
        out,
        "localize",
        {"detections": str(args.detections), "camera": str(args.camera), "cloud": str(args.cloud)},
        {
            "occlusion": args.occlusion,
            "zbuffer_cell": args.zbuffer_cell,
            "depth_tolerance": args.depth_tolerance,
            "mode": args.mode,
            "colored": str(args.colored) if args.colored else None,
        },
        started,
    )
    print(f"localized {len(results)} detection(s) against {len(cloud)} points -> {out}")
    return EXIT_OK


# --- eval -------------------------------------------------------------------


def _load_annotations(args: argparse.Namespace) -> AnnotationSet:
    if args.format == "coco":
        return parse_coco(args.annotations)
    return parse_yolo(args.annotations, args.index)


def _cmd_eval(args: argparse.Namespace) -> int:
    started = time.monotonic()
    dets = load_detections_json(args.detections)
    aset = _load_annotations(args)
    for k, det in enumerate(dets):
        if det.class_id >= len(aset.class_map):
            raise ValueError(
                f"detection {k}: class id {det.class_id} outside the "
                f"{len(aset.class_map)}-class map"
            )
    gts = aset.annotations
    report = evaluate(dets, gts, args.iou_threshold)
    payload = report_to_dict(report, aset.class_map)
    out = Path(args.out)
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if args.markdown:
        Path(args.markdown).write_text(report_markdown(report, aset.class_map))
    _write_manifest(
        out,
        "eval",
        {"detections": str(args.detections), "annotations": str(args.annotations)},
        {"iou_threshold": args.iou_threshold, "format": args.format},
        started,
    )
    map_txt = f"{report.map:.4f}" if report.map_defined else "undefined (reported as 0)"
    print(
        f"P={report.precision:.4f} R={report.recall:.4f} F1={report.f1:.4f} mAP@{args.iou_threshold}={map_txt}"
    )
    return EXIT_OK


# --- params -------------------------------------------------------------------


def _cmd_params(args: argparse.Namespace) -> int:
    started = time.monotonic()
    if args.builtin:
        spec = builtin_backbone(args.builtin)
    else:
        spec = parse_backbone_spec(args.spec_file)
    summary = backbone_summary(spec)
    print(summary_markdown(summary), end="")
    payload = {
        "name": summary.name,
        "rows": [
            {"index": r.index, "kind": r.kind, "c_in": r.c_in, "c_out": r.c_out, "params": r.params}
            for r in summary.rows
        ],
        "total": summary.total,
    }
    baseline_name = args.baseline
    if baseline_name and baseline_name != summary.name:
        baseline = backbone_summary(builtin_backbone(baseline_name))
        red = reduction_ratio(baseline.total, summary.total)
        print(f"\nreduction vs {baseline_name}: {100.0 * red:.2f}% "
              f"({baseline.total} -> {summary.total})")
        payload["baseline"] = {"name": baseline_name, "total": baseline.total, "reduction": red}
    if args.json:
        out = Path(args.json)
        out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        _write_manifest(
            out,
            "params",
            {"builtin": args.builtin, "spec_file": str(args.spec_file) if args.spec_file else None},
            {"baseline": args.baseline},
            started,
        )
    return EXIT_OK


# --- loss-bench ----------------------------------------------------------------


def _cmd_loss_bench(args: argparse.Namespace) -> int:
    started = time.monotonic()
    losses = args.losses.split(",")
    ratios = [float(r) for r in args.ratios.split(",")]
    iou_lo, iou_hi = (float(v) for v in args.init_iou.split(","))
    rows = []
    for loss_id in losses:
        for ratio in ratios:
            for trial in range(args.trials):
                seed = args.seed + trial
                rng = np.random.default_rng(seed)
                init, gt = sample_box_pair(rng, (iou_lo, iou_hi))
                traj = regress_box(init, gt, loss_id, ratio, args.steps, args.lr)
                reached = steps_until(traj, 0.9)
                rows.append(
                    {
                        "loss_id": loss_id,
                        "ratio": ratio,
                        "seed": seed,
                        "init_iou": traj[0].iou,
                        "steps_to_0.9": "" if reached is None else reached,
                        "final_iou": traj[-1].iou,
                        "final_loss": traj[-1].loss,
                    }
                )
    out = Path(args.out)
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=["loss_id", "ratio", "seed", "init_iou", "steps_to_0.9", "final_iou", "final_loss"],
        )
        writer.writeheader()
        writer.writerows(rows)
    _write_manifest(
        out,
        "loss-bench",
        {},
        {
            "losses": args.losses,
            "ratios": args.ratios,
            "trials": args.trials,
            "seed": args.seed,
            "steps": args.steps,
            "lr": args.lr,
            "init_iou": args.init_iou,
        },
        started,
    )
    print(f"wrote {len(rows)} bench rows -> {out}")
    return EXIT_OK


# --- dataset --------------------------------------------------------------------


def _cmd_dataset_convert(args: argparse.Namespace) -> int:
    started = time.monotonic()
    if args.source_format == "coco":
        aset = parse_coco(args.input)
    else:
        aset = parse_yolo(args.input, args.index)
    written = convert(aset, args.target_format, args.output)
    target = Path(args.output)
    _write_manifest(
        target if target.is_dir() else written[0],
        "dataset convert",
        {"input": str(args.input), "index": str(args.index) if args.index else None},
        {"from": args.source_format, "to": args.target_format},
        started,
    )
    print(f"converted {len(aset.annotations)} annotation(s) across {len(aset.images)} image(s)")
    return EXIT_OK


def _cmd_dataset_stats(args: argparse.Namespace) -> int:
    started = time.monotonic()
    if args.source_format == "coco":
        aset = parse_coco(args.input)
    else:
        aset = parse_yolo(args.input, args.index)
    stats = dataset_stats(aset)
    text = json.dumps(stats.to_dict(), indent=2, sort_keys=True)
    print(text)
    if args.json:
        out = Path(args.json)
        out.write_text(text + "\n")
        _write_manifest(
            out,
            "dataset stats",
            {"input": str(args.input)},
            {"format": args.source_format},
            started,
        )
    return EXIT_OK


# --- simulate --------------------------------------------------------------------


def _cmd_simulate(args: argparse.Namespace) -> int:
    started = time.monotonic()
    spec, rig = load_scene_config(args.scene)
    if args.seed is not None:
        spec = type(spec)(
            radius=spec.radius,
            length=spec.length,
            spacing=spec.spacing,
            patches=spec.patches,
            seed=args.seed,
        )
    options = LocalizationOptions(
        occlusion_culling=True,
        zbuffer_cell=args.zbuffer_cell,
        depth_tolerance=args.depth_tolerance,
    )
    scene = generate_scene(spec)
    cameras = generate_camera_ring(rig)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_ply(out_dir / "scene.ply", scene.cloud)

    images = []
    gt_annotations = []
    for ci, (intrinsics, pose) in enumerate(cameras):
        save_camera_json(out_dir / f"camera_{ci:02d}.json", intrinsics, pose)
        images.append(
            ImageInfo(ci, f"camera_{ci:02d}.png", rig.image_width, rig.image_height)
        )
        for pid, patch in enumerate(scene.spec.patches, start=1):
            bbox = ground_truth_bbox(scene, pid, intrinsics, pose, options)
            if bbox is None:
                continue
            clipped = BBox2D(
                max(bbox.x_min, 0.0),
                max(bbox.y_min, 0.0),
                min(bbox.x_max, float(rig.image_width)),
                min(bbox.y_max, float(rig.image_height)),
            ) if (
                bbox.x_min < rig.image_width
                and bbox.y_min < rig.image_height
                and bbox.x_max > 0
                and bbox.y_max > 0
            ) else None
            if clipped is None:
                continue
            gt_annotations.append(GroundTruthRecord(ci, patch.class_id, clipped))
    aset = AnnotationSet(images, gt_annotations, AIRSD_CLASSES)
    write_coco(aset, out_dir / "gt_coco.json")
    _write_manifest(
        out_dir,
        "simulate",
        {"scene": str(args.scene)},
        {
            "seed": spec.seed,
            "zbuffer_cell": args.zbuffer_cell,
            "depth_tolerance": args.depth_tolerance,
        },
        started,
    )
    print(
        f"scene: {len(scene.cloud)} points, {len(scene.spec.patches)} patch(es), "
        f"{len(cameras)} camera(s), {len(gt_annotations)} ground-truth box(es) -> {out_dir}"
    )
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jddl",
        description="Aircraft surface damage localization toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("localize", help="map 2D detections onto a 3D point cloud")
    p.add_argument("--detections", required=True, help="detections JSON")
    p.add_argument("--camera", required=True, help="camera rig JSON")
    p.add_argument("--cloud", required=True, help="point cloud (.ply or whitespace xyz)")
    p.add_argument("--out", required=True, help="localization report JSON")
    p.add_argument("--colored", default=None, help="optional colored PLY output")
    p.add_argument("--occlusion", choices=("on", "off"), default="on")
    p.add_argument("--zbuffer-cell", type=float, default=1.0)
    p.add_argument("--depth-tolerance", type=float, default=0.01)
    p.add_argument("--mode", choices=("original-points", "backprojected"), default="original-points")
    p.set_defaults(func=_cmd_localize)

    p = sub.add_parser("eval", help="score detections against annotations")
    p.add_argument("--detections", required=True)
    p.add_argument("--annotations", required=True, help="COCO JSON file or YOLO label dir")
    p.add_argument("--format", choices=("coco", "yolo"), default="coco")
    p.add_argument("--index", default=None, help="sidecar size index CSV (YOLO)")
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--out", required=True, help="metrics report JSON")
    p.add_argument("--markdown", default=None, help="optional Markdown table output")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("params", help="backbone parameter accounting")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--builtin", choices=BUILTIN_NAMES)
    g.add_argument("--spec-file", default=None, help="line-oriented backbone spec file")
    p.add_argument("--baseline", choices=BUILTIN_NAMES, default="yolov8n")
    p.add_argument("--json", default=None, help="optional JSON output")
    p.set_defaults(func=_cmd_params)

    p = sub.add_parser("loss-bench", help="box-regression convergence benchmark")
    p.add_argument("--losses", default="ciou,inner_ciou")
    p.add_argument("--ratios", default="1.0")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--init-iou", default="0.0,1.0", help="accepted initial IoU range 'lo,hi'")
    p.add_argument("--out", required=True, help="CSV output")
    p.set_defaults(func=_cmd_loss_bench)

    p = sub.add_parser("dataset", help="annotation conversion and statistics")
    dsub = p.add_subparsers(dest="dataset_command", required=True)
    c = dsub.add_parser("convert")
    c.add_argument("--from", dest="source_format", choices=("coco", "yolo"), required=True)
    c.add_argument("--to", dest="target_format", choices=("coco", "yolo"), required=True)
    c.add_argument("--input", required=True)
    c.add_argument("--index", default=None)
    c.add_argument("--output", required=True)
    c.set_defaults(func=_cmd_dataset_convert)
    s = dsub.add_parser("stats")
    s.add_argument("--format", dest="source_format", choices=("coco", "yolo"), required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--index", default=None)
    s.add_argument("--json", default=None)
    s.set_defaults(func=_cmd_dataset_stats)

    p = sub.add_parser("simulate", help="generate a synthetic fuselage scene")
    p.add_argument("--scene", required=True, help="scene config JSON")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--zbuffer-cell", type=float, default=4.0)
    p.add_argument("--depth-tolerance", type=float, default=0.02)
    p.set_defaults(func=_cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except KeyboardInterrupt:
        raise
    except Exception as exc:  # internal invariant violation
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
