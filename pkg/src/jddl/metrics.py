"""Detection evaluation: greedy IoU matching, P/R/F1, AP, and mAP.

Protocol
--------
Matching runs independently per (image_id, class_id) slice. Detections
are visited in order of descending confidence (ties keep input order);
each one claims the still-unmatched ground truth of highest IoU if that
IoU reaches the threshold (TP), otherwise it is a FP. Every ground truth
matches at most once; leftovers are FN.

AP is the exact area under the per-class precision-recall curve after
applying the monotone non-increasing precision envelope (all-points
interpolation, no 11/101-point sampling). mAP averages the per-class APs
that are defined; a class with no ground truth and no detections has no
AP and is excluded. Pooled (micro) P/R/F1 aggregate TP/FP/FN over all
classes. All 0/0 ratios are defined as 0.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Sequence

from .boxes import BBox2D, corner_iou


@dataclass(frozen=True)
class DetectionRecord:
    image_id: Hashable
    class_id: int
    box: BBox2D
    confidence: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")


@dataclass(frozen=True)
class GroundTruthRecord:
    image_id: Hashable
    class_id: int
    box: BBox2D

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")


@dataclass(frozen=True)
class PRCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError(f"counts must be non-negative: {self}")

    def __add__(self, other: "PRCounts") -> "PRCounts":
        return PRCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class MatchResult:
    """tp_flags is aligned with the input detection order."""

    tp_flags: tuple[bool, ...]
    counts: PRCounts


def match_detections(
    dets: Sequence[DetectionRecord],
    gts: Sequence[GroundTruthRecord],
    iou_threshold: float = 0.5,
) -> MatchResult:
    """Greedy confidence-ordered matching within each (image, class) slice."""
    if not (0.0 < iou_threshold < 1.0):
        raise ValueError(f"iou threshold must lie in (0, 1), got {iou_threshold}")
    flags = [False] * len(dets)
    slices: dict[tuple[Hashable, int], list[int]] = {}
    for i, det in enumerate(dets):
        slices.setdefault((det.image_id, det.class_id), []).append(i)
    gt_slices: dict[tuple[Hashable, int], list[int]] = {}
    for j, gt in enumerate(gts):
        gt_slices.setdefault((gt.image_id, gt.class_id), []).append(j)

    matched_gt = [False] * len(gts)
    for key, det_indices in slices.items():
        candidates = gt_slices.get(key, [])
        # stable sort keeps input order for equal confidences
        for i in sorted(det_indices, key=lambda k: -dets[k].confidence):
            best_j = -1
            best_iou = 0.0
            for j in candidates:
                if matched_gt[j]:
                    continue
                v = corner_iou(dets[i].box, gts[j].box)
                if v > best_iou:
                    best_iou = v
                    best_j = j
            if best_j >= 0 and best_iou >= iou_threshold:
                flags[i] = True
                matched_gt[best_j] = True

    tp = sum(flags)
    counts = PRCounts(tp=tp, fp=len(dets) - tp, fn=len(gts) - tp)
    return MatchResult(tuple(flags), counts)


def precision_recall_f1(c: PRCounts) -> tuple[float, float, float]:
    """P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R); 0/0 cases are 0."""
    p = c.tp / (c.tp + c.fp) if c.tp + c.fp > 0 else 0.0
    r = c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else 0.0
    f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def average_precision(flags: Sequence[bool], n_gt: int) -> float | None:
    """Exact envelope-integrated AP from confidence-sorted TP/FP flags.

    Returns None (undefined) when there are neither ground truths nor
    detections; detections against zero ground truths score 0 with a
    warning.
    """
    if n_gt < 0:
        raise ValueError(f"n_gt must be non-negative, got {n_gt}")
    if n_gt == 0:
        if len(flags) == 0:
            return None
        warnings.warn("detections scored against zero ground truths; AP set to 0")
        return 0.0
    if len(flags) == 0:
        return 0.0
    precisions = []
    recalls = []
    tp = 0
    for k, flag in enumerate(flags, start=1):
        tp += int(flag)
        precisions.append(tp / k)
        recalls.append(tp / n_gt)
    # monotone non-increasing envelope, right to left
    for k in range(len(precisions) - 2, -1, -1):
        precisions[k] = max(precisions[k], precisions[k + 1])
    ap = 0.0
    prev_recall = 0.0
    for p, r in zip(precisions, recalls):
        if r > prev_recall:
            ap += (r - prev_recall) * p
            prev_recall = r
    return ap


def mean_ap(per_class_ap: Sequence[float]) -> float:
    """Arithmetic mean over the defined per-class APs."""
    if len(per_class_ap) == 0:
        raise ValueError("mean AP needs at least one defined per-class AP")
    return sum(per_class_ap) / len(per_class_ap)


@dataclass(frozen=True)
class ClassMetrics:
    class_id: int
    counts: PRCounts
    precision: float
    recall: float
    f1: float
    ap: float | None
    n_gt: int


@dataclass(frozen=True)
class EvaluationReport:
    iou_threshold: float
    per_class: tuple[ClassMetrics, ...]
    counts: PRCounts
    precision: float
    recall: float
    f1: float
    map: float
    map_defined: bool


def evaluate(
    dets: Sequence[DetectionRecord],
    gts: Sequence[GroundTruthRecord],
    iou_threshold: float = 0.5,
) -> EvaluationReport:
    """Per-class P/R/F1/AP plus pooled P/R/F1 and mAP."""
    match = match_detections(dets, gts, iou_threshold)
    classes = sorted({d.class_id for d in dets} | {g.class_id for g in gts})
    per_class = []
    defined_aps = []
    for c in classes:
        det_entries = [
            (dets[i].confidence, i, match.tp_flags[i])
            for i in range(len(dets))
            if dets[i].class_id == c
        ]
        det_entries.sort(key=lambda e: (-e[0], e[1]))
        flags = [e[2] for e in det_entries]
        n_gt = sum(1 for g in gts if g.class_id == c)
        tp = sum(flags)
        counts = PRCounts(tp=tp, fp=len(flags) - tp, fn=n_gt - tp)
        p, r, f1 = precision_recall_f1(counts)
        ap = average_precision(flags, n_gt)
        if ap is not None:
            defined_aps.append(ap)
        per_class.append(ClassMetrics(c, counts, p, r, f1, ap, n_gt))
    p, r, f1 = precision_recall_f1(match.counts)
    map_defined = len(defined_aps) > 0
    return EvaluationReport(
        iou_threshold=iou_threshold,
        per_class=tuple(per_class),
        counts=match.counts,
        precision=p,
        recall=r,
        f1=f1,
        map=mean_ap(defined_aps) if map_defined else 0.0,
        map_defined=map_defined,
    )


# --- serialization -----------------------------------------------------------


def detection_from_dict(data: dict) -> DetectionRecord:
    bbox = data["bbox"]
    if len(bbox) != 4:
        raise ValueError(f"detection bbox must have 4 values, got {bbox}")
    return DetectionRecord(
        image_id=data["image_id"],
        class_id=int(data["class_id"]),
        box=BBox2D(float(bbox[0]), float(bbox[1]), float(bbox[2]), float(bbox[3])),
        confidence=float(data["confidence"]),
    )


def load_detections_json(path: str | Path) -> list[DetectionRecord]:
    """Read a list of {image_id, class_id, bbox:[x0,y0,x1,y1], confidence}."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"detections file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise ValueError(f"detections file {path} must hold a JSON list")
    out = []
    for k, entry in enumerate(data):
        try:
            out.append(detection_from_dict(entry))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"detections file {path}, entry {k}: {exc}") from exc
    return out


def save_detections_json(path: str | Path, dets: Sequence[DetectionRecord]) -> None:
    data = [
        {
            "image_id": d.image_id,
            "class_id": d.class_id,
            "bbox": list(d.box.as_tuple()),
            "confidence": d.confidence,
        }
        for d in dets
    ]
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def report_to_dict(report: EvaluationReport, class_names: Sequence[str] | None = None) -> dict:
    def name(c: int) -> str:
        if class_names is not None and 0 <= c < len(class_names):
            return class_names[c]
        return str(c)

    return {
        "iou_threshold": report.iou_threshold,
        "per_class": [
            {
                "class_id": m.class_id,
                "class_name": name(m.class_id),
                "tp": m.counts.tp,
                "fp": m.counts.fp,
                "fn": m.counts.fn,
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "ap": m.ap,
                "n_gt": m.n_gt,
            }
            for m in report.per_class
        ],
        "overall": {
            "tp": report.counts.tp,
            "fp": report.counts.fp,
            "fn": report.counts.fn,
            "precision": report.precision,
            "recall": report.recall,
            "f1": report.f1,
            "map": report.map,
            "map_defined": report.map_defined,
        },
    }


def report_markdown(report: EvaluationReport, class_names: Sequence[str] | None = None) -> str:
    """Markdown table: one row per class (P, R, F1, AP) plus the All row."""
    def name(c: int) -> str:
        if class_names is not None and 0 <= c < len(class_names):
            return class_names[c]
        return f"class {c}"

    lines = [
        "| Class | P | R | F1 | AP |",
        "| --- | --- | --- | --- | --- |",
    ]
    for m in report.per_class:
        ap = f"{m.ap:.4f}" if m.ap is not None else "n/a"
        lines.append(
            f"| {name(m.class_id)} | {m.precision:.4f} | {m.recall:.4f} | {m.f1:.4f} | {ap} |"
        )
    map_cell = f"{report.map:.4f}" if report.map_defined else "n/a"
    lines.append(
        f"| All | {report.precision:.4f} | {report.recall:.4f} | {report.f1:.4f} | {map_cell} |"
    )
    return "\n".join(lines) + "\n"
