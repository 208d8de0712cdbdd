"""Annotation sets in YOLO and COCO form: parse, validate, convert, summarize.

YOLO: one `.txt` per image, lines `class x_center y_center width height`
with all four geometry fields normalized to [0, 1]; image pixel sizes come
from a sidecar CSV index `file,width,height` keyed by file stem (640x640
assumed when an image has no index entry). COCO: a single JSON with
`images`, `annotations` (bbox = [x, y, width, height] in absolute pixels),
and `categories`; category ids may be 0- or 1-based (or arbitrary) and are
remapped to 0-based contiguous indices following the categories array
order.

Boxes that drift marginally past the image border are clamped to it;
boxes entirely outside the image are rejected as corrupt.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .boxes import BBox2D
from .metrics import GroundTruthRecord

# 11-class aircraft surface damage taxonomy, in canonical order
AIRSD_CLASSES = (
    "crack",
    "dent",
    "rust",
    "paint peeling",
    "scratch",
    "rivet damage",
    "lightning strike",
    "bird strike",
    "hail damage",
    "wrinkle",
    "missing fastener",
)

DEFAULT_IMAGE_SIZE = (640, 640)


class AnnotationFormatError(ValueError):
    """Malformed annotation content; message names the file and location."""


@dataclass(frozen=True)
class ImageInfo:
    """image_id is the join key detections must use: the original COCO id
    for COCO sets, the label-file stem for YOLO sets."""

    image_id: int | str
    file_name: str
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image {self.file_name}: non-positive size {self.width}x{self.height}")

    @property
    def stem(self) -> str:
        return Path(self.file_name).stem


@dataclass
class AnnotationSet:
    images: list[ImageInfo]
    annotations: list[GroundTruthRecord]
    class_map: tuple[str, ...] = AIRSD_CLASSES

    def __post_init__(self) -> None:
        ids = [img.image_id for img in self.images]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate image ids in annotation set")
        by_id = {img.image_id: img for img in self.images}
        for ann in self.annotations:
            if ann.image_id not in by_id:
                raise ValueError(f"annotation references unknown image id {ann.image_id}")
            if not (0 <= ann.class_id < len(self.class_map)):
                raise ValueError(
                    f"annotation class id {ann.class_id} outside the {len(self.class_map)}-class map"
                )

    def image_by_id(self, image_id: int) -> ImageInfo:
        for img in self.images:
            if img.image_id == image_id:
                return img
        raise KeyError(image_id)


def _clamp_box(box: BBox2D, width: int, height: int, where: str) -> BBox2D:
    """Clamp marginal border overshoot; reject boxes entirely off-image."""
    x0 = min(max(box.x_min, 0.0), float(width))
    y0 = min(max(box.y_min, 0.0), float(height))
    x1 = min(max(box.x_max, 0.0), float(width))
    y1 = min(max(box.y_max, 0.0), float(height))
    if not (x0 < x1 and y0 < y1):
        raise AnnotationFormatError(f"{where}: box {box.as_tuple()} lies entirely outside the image")
    return BBox2D(x0, y0, x1, y1)


# --- sidecar size index -------------------------------------------------------


def read_size_index(path: str | Path) -> dict[str, tuple[str, int, int]]:
    """Read CSV `file,width,height`; returns stem -> (file name, w, h)."""
    index: dict[str, tuple[str, int, int]] = {}
    with open(path, newline="") as fh:
        for row_no, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if row_no == 1 and row[0].strip().lower() == "file":
                continue  # header
            if len(row) != 3:
                raise AnnotationFormatError(f"{path}:{row_no}: expected 'file,width,height'")
            name = row[0].strip()
            try:
                w, h = int(row[1]), int(row[2])
            except ValueError as exc:
                raise AnnotationFormatError(f"{path}:{row_no}: {exc}") from exc
            index[Path(name).stem] = (name, w, h)
    return index


def write_size_index(path: str | Path, images: Sequence[ImageInfo]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file", "width", "height"])
        for img in images:
            writer.writerow([img.file_name, img.width, img.height])


# --- YOLO ---------------------------------------------------------------------


def parse_yolo(
    label_dir: str | Path,
    image_sizes: str | Path | Mapping[str, tuple[str, int, int]] | None = None,
    class_map: Sequence[str] = AIRSD_CLASSES,
) -> AnnotationSet:
    """Parse a directory of YOLO label files into pixel-space annotations.

    image_sizes may be a sidecar index CSV path, a pre-built mapping as
    returned by read_size_index, or None (every image defaults to
    640x640 with `<stem>` as its file name).
    """
    label_dir = Path(label_dir)
    if not label_dir.is_dir():
        raise AnnotationFormatError(f"{label_dir}: not a directory of YOLO label files")
    if image_sizes is None:
        index: Mapping[str, tuple[str, int, int]] = {}
    elif isinstance(image_sizes, (str, Path)):
        index = read_size_index(image_sizes)
    else:
        index = image_sizes

    images: list[ImageInfo] = []
    annotations: list[GroundTruthRecord] = []
    label_files = sorted(label_dir.glob("*.txt"))
    for label_path in label_files:
        stem = label_path.stem
        file_name, width, height = index.get(stem, (stem, *DEFAULT_IMAGE_SIZE))
        image_id = stem
        images.append(ImageInfo(image_id, file_name, width, height))
        with open(label_path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                where = f"{label_path}:{lineno}"
                fields = line.split()
                if len(fields) != 5:
                    raise AnnotationFormatError(
                        f"{where}: expected 5 fields 'class x_c y_c w h', got {len(fields)}"
                    )
                try:
                    class_id = int(fields[0])
                    xc, yc, w, h = (float(f) for f in fields[1:])
                except ValueError as exc:
                    raise AnnotationFormatError(f"{where}: {exc}") from exc
                if not (0 <= class_id < len(class_map)):
                    raise AnnotationFormatError(
                        f"{where}: class id {class_id} outside the {len(class_map)}-class map"
                    )
                for name, value in (("x_center", xc), ("y_center", yc)):
                    if not (0.0 <= value <= 1.0):
                        raise AnnotationFormatError(
                            f"{where}: normalized {name} {value} outside [0, 1]"
                        )
                for name, value in (("width", w), ("height", h)):
                    if not (0.0 < value <= 1.0):
                        raise AnnotationFormatError(
                            f"{where}: normalized {name} {value} outside (0, 1]"
                        )
                box = BBox2D(
                    (xc - w / 2.0) * width,
                    (yc - h / 2.0) * height,
                    (xc + w / 2.0) * width,
                    (yc + h / 2.0) * height,
                )
                annotations.append(
                    GroundTruthRecord(image_id, class_id, _clamp_box(box, width, height, where))
                )
    return AnnotationSet(images, annotations, tuple(class_map))


def write_yolo(aset: AnnotationSet, out_dir: str | Path) -> list[Path]:
    """One label file per image plus the sidecar size index. Returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    by_image: dict[int, list[GroundTruthRecord]] = {img.image_id: [] for img in aset.images}
    for ann in aset.annotations:
        by_image[ann.image_id].append(ann)
    for img in aset.images:
        if img.width <= 0 or img.height <= 0:
            raise AnnotationFormatError(f"image {img.file_name}: size required for YOLO output")
        lines = []
        for ann in by_image[img.image_id]:
            b = ann.box
            xc = (b.x_min + b.x_max) / 2.0 / img.width
            yc = (b.y_min + b.y_max) / 2.0 / img.height
            w = b.width / img.width
            h = b.height / img.height
            lines.append(f"{ann.class_id} {xc:.6f} {yc:.6f} {w:.6f} {h:.6f}")
        path = out_dir / f"{img.stem}.txt"
        path.write_text("\n".join(lines) + ("\n" if lines else ""))
        written.append(path)
    index_path = out_dir / "index.csv"
    write_size_index(index_path, aset.images)
    written.append(index_path)
    return written


# --- COCO ---------------------------------------------------------------------


def parse_coco(source: str | Path | dict) -> AnnotationSet:
    """Parse a COCO JSON file (or an already-loaded dict)."""
    if isinstance(source, dict):
        data = source
        where = "<dict>"
    else:
        where = str(source)
        try:
            data = json.loads(Path(source).read_text())
        except json.JSONDecodeError as exc:
            raise AnnotationFormatError(f"{where}: not valid JSON: {exc}") from exc
    for key in ("images", "annotations", "categories"):
        if key not in data:
            raise AnnotationFormatError(f"{where}: missing '{key}' array")

    class_map = tuple(str(cat["name"]) for cat in data["categories"])
    cat_remap = {cat["id"]: k for k, cat in enumerate(data["categories"])}
    if len(cat_remap) != len(data["categories"]):
        raise AnnotationFormatError(f"{where}: duplicate category ids")

    images = []
    by_image_id: dict = {}
    for entry in data["images"]:
        width = int(entry.get("width", DEFAULT_IMAGE_SIZE[0]))
        height = int(entry.get("height", DEFAULT_IMAGE_SIZE[1]))
        image_id = entry["id"]
        info = ImageInfo(image_id, str(entry.get("file_name", f"image_{image_id}")), width, height)
        images.append(info)
        by_image_id[image_id] = info

    annotations = []
    for k, ann in enumerate(data["annotations"]):
        if ann["image_id"] not in by_image_id:
            raise AnnotationFormatError(
                f"{where}: annotation {ann.get('id', k)} references missing image id {ann['image_id']}"
            )
        if ann["category_id"] not in cat_remap:
            raise AnnotationFormatError(
                f"{where}: annotation {ann.get('id', k)} references missing category id {ann['category_id']}"
            )
        x, y, w, h = (float(v) for v in ann["bbox"])
        if w <= 0 or h <= 0:
            raise AnnotationFormatError(
                f"{where}: annotation {ann.get('id', k)} has non-positive bbox size {w}x{h}"
            )
        img = by_image_id[ann["image_id"]]
        box = _clamp_box(
            BBox2D(x, y, x + w, y + h), img.width, img.height, f"{where}: annotation {ann.get('id', k)}"
        )
        annotations.append(GroundTruthRecord(img.image_id, cat_remap[ann["category_id"]], box))
    return AnnotationSet(images, annotations, class_map)


def coco_dict(aset: AnnotationSet) -> dict:
    """Serialize to the COCO layout (1-based category and annotation ids).

    Integer image ids are kept verbatim; string ids (YOLO-sourced sets)
    become sequential integers, with the original stem preserved in
    file_name.
    """
    all_int = all(isinstance(img.image_id, int) for img in aset.images)
    id_map = {
        img.image_id: (img.image_id if all_int else k) for k, img in enumerate(aset.images)
    }
    images = [
        {
            "id": id_map[img.image_id],
            "file_name": img.file_name,
            "width": img.width,
            "height": img.height,
        }
        for img in aset.images
    ]
    categories = [{"id": k + 1, "name": name} for k, name in enumerate(aset.class_map)]
    annotations = []
    for k, ann in enumerate(aset.annotations):
        b = ann.box
        annotations.append(
            {
                "id": k + 1,
                "image_id": id_map[ann.image_id],
                "category_id": ann.class_id + 1,
                "bbox": [b.x_min, b.y_min, b.width, b.height],
                "area": b.area(),
                "iscrowd": 0,
            }
        )
    return {"images": images, "annotations": annotations, "categories": categories}


def write_coco(aset: AnnotationSet, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(coco_dict(aset), indent=2, sort_keys=True) + "\n")
    return path


def convert(aset: AnnotationSet, target: str, out: str | Path) -> list[Path]:
    """Serialize to `target` ('yolo' writes a directory, 'coco' a JSON file)."""
    if target == "yolo":
        return write_yolo(aset, out)
    if target == "coco":
        return [write_coco(aset, out)]
    raise ValueError(f"unknown conversion target '{target}', expected 'yolo' or 'coco'")


# --- summary ------------------------------------------------------------------


@dataclass
class DatasetStats:
    n_images: int
    n_annotations: int
    per_class: dict[str, int]
    boxes_per_image: dict[int, int]
    box_area: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_images": self.n_images,
            "n_annotations": self.n_annotations,
            "per_class": self.per_class,
            "boxes_per_image": {str(k): v for k, v in sorted(self.boxes_per_image.items())},
            "box_area": self.box_area,
        }


def dataset_stats(aset: AnnotationSet) -> DatasetStats:
    """Per-class counts, boxes-per-image histogram, and box-size summary."""
    per_class = {name: 0 for name in aset.class_map}
    counts_by_image = {img.image_id: 0 for img in aset.images}
    areas = []
    for ann in aset.annotations:
        per_class[aset.class_map[ann.class_id]] += 1
        counts_by_image[ann.image_id] += 1
        areas.append(ann.box.area())
    histogram: dict[int, int] = {}
    for n in counts_by_image.values():
        histogram[n] = histogram.get(n, 0) + 1
    per_class = {name: n for name, n in per_class.items() if n > 0}
    area_summary: dict[str, float] = {}
    if areas:
        areas.sort()
        mid = len(areas) // 2
        median = areas[mid] if len(areas) % 2 else (areas[mid - 1] + areas[mid]) / 2.0
        area_summary = {
            "min": areas[0],
            "median": median,
            "mean": sum(areas) / len(areas),
            "max": areas[-1],
        }
    return DatasetStats(
        n_images=len(aset.images),
        n_annotations=len(aset.annotations),
        per_class=per_class,
        boxes_per_image=histogram,
        box_area=area_summary,
    )
