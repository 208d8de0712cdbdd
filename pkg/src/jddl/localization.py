"""Map a detected 2D bounding box onto the 3D points it covers.

Pipeline: project every cloud point through P = K @ [R | T]; drop points
behind the camera (depth <= 0); keep points whose pixel lands inside the
closed bbox interval (x_min <= u <= x_max, y_min <= v <= y_max); when
occlusion culling is on, keep only z-buffer-visible points. Selected
points are reported either as the original cloud coordinates (default)
or re-derived by back-projecting (u, v, depth); the two agree to within
round-trip float noise.

Occlusion culling is an extension of the plain project-and-gate
procedure: without it every fuselage point whose projection falls in the
box is selected, including far-side surface points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .boxes import BBox2D
from .cloud import PointCloud, write_ply
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    back_project_pixels,
    build_projection,
    project_points,
)

SELECTION_MODES = ("original-points", "backprojected")


@dataclass(frozen=True)
class LocalizationOptions:
    occlusion_culling: bool = False
    zbuffer_cell: float = 1.0
    depth_tolerance: float = 0.01
    selection_mode: str = "original-points"

    def __post_init__(self) -> None:
        if not self.zbuffer_cell > 0:
            raise ValueError(f"z-buffer cell size must be positive, got {self.zbuffer_cell}")
        if self.depth_tolerance < 0:
            raise ValueError(f"depth tolerance must be non-negative, got {self.depth_tolerance}")
        if self.selection_mode not in SELECTION_MODES:
            raise ValueError(
                f"selection mode '{self.selection_mode}' not one of {SELECTION_MODES}"
            )


@dataclass(frozen=True)
class LocalizationResult:
    """Selected damage points. centroid and aabb3d are None when empty."""

    indices: np.ndarray
    points: np.ndarray
    centroid: np.ndarray | None
    aabb3d: np.ndarray | None
    class_id: int | None = None

    @property
    def n_points(self) -> int:
        return int(self.indices.shape[0])


def zbuffer_visibility(
    pixels: np.ndarray | Sequence,
    cell: float = 1.0,
    depth_tolerance: float = 0.01,
) -> np.ndarray:
    """Per-point visibility mask from a nearest-depth grid test.

    pixels is (N, 3) array-like of (u, v, depth); rows with the same
    (floor(u/cell), floor(v/cell)) bin compete, and a point survives iff
    its depth is within (1 + depth_tolerance) of the bin minimum. The
    reduction is a per-bin minimum, so the result is independent of input
    order. Depths are assumed positive.
    """
    if not cell > 0:
        raise ValueError(f"cell size must be positive, got {cell}")
    if depth_tolerance < 0:
        raise ValueError(f"depth tolerance must be non-negative, got {depth_tolerance}")
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"pixels must be (N, 3) of (u, v, depth), got shape {arr.shape}")
    if arr.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    iu = np.floor(arr[:, 0] / cell).astype(np.int64)
    iv = np.floor(arr[:, 1] / cell).astype(np.int64)
    key = iu * np.int64(2**32) + iv
    uniq, inverse = np.unique(key, return_inverse=True)
    nearest = np.full(uniq.shape[0], np.inf)
    np.minimum.at(nearest, inverse, arr[:, 2])
    return arr[:, 2] <= nearest[inverse] * (1.0 + depth_tolerance)


def localize_damage(
    bbox: BBox2D,
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    cloud: PointCloud,
    options: LocalizationOptions = LocalizationOptions(),
    class_id: int | None = None,
) -> LocalizationResult:
    """Select the cloud points whose projection falls inside the box.

    An empty selection is a valid result. The detection's class id is
    carried through untouched.
    """
    P = build_projection(intrinsics, pose)
    u, v, depth = project_points(P, cloud.points)
    selected = depth > 0.0
    np.logical_and(selected, u >= bbox.x_min, out=selected)
    np.logical_and(selected, u <= bbox.x_max, out=selected)
    np.logical_and(selected, v >= bbox.y_min, out=selected)
    np.logical_and(selected, v <= bbox.y_max, out=selected)
    if options.occlusion_culling:
        front = depth > 0.0
        visible = np.zeros(len(cloud), dtype=bool)
        visible[front] = zbuffer_visibility(
            np.stack([u[front], v[front], depth[front]], axis=1),
            options.zbuffer_cell,
            options.depth_tolerance,
        )
        selected &= visible
    indices = np.flatnonzero(selected)
    if options.selection_mode == "backprojected":
        points = back_project_pixels(intrinsics, pose, u[indices], v[indices], depth[indices])
    else:
        points = cloud.points[indices].copy()
    if indices.size == 0:
        return LocalizationResult(indices, points.reshape(0, 3), None, None, class_id)
    centroid = points.mean(axis=0)
    aabb3d = np.stack([points.min(axis=0), points.max(axis=0)])
    return LocalizationResult(indices, points, centroid, aabb3d, class_id)


# --- reporting and export ----------------------------------------------------

CLEAN_COLOR = (128, 128, 128)

# distinguishable palette, indexed by class id modulo its length
CLASS_PALETTE = (
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (170, 110, 40),
    (128, 0, 0),
)


def class_color(class_id: int | None) -> tuple[int, int, int]:
    if class_id is None:
        return CLASS_PALETTE[0]
    return CLASS_PALETTE[class_id % len(CLASS_PALETTE)]


def result_to_dict(result: LocalizationResult, detection_id: int) -> dict:
    entry = {
        "detection_id": detection_id,
        "class_id": result.class_id,
        "n_points": result.n_points,
        "centroid": None if result.centroid is None else [float(x) for x in result.centroid],
        "aabb": None if result.aabb3d is None else [float(x) for x in result.aabb3d.reshape(6)],
        "indices": [int(i) for i in result.indices],
    }
    return entry


def write_report_json(path: str | Path, results: Sequence[LocalizationResult]) -> None:
    data = [result_to_dict(res, i) for i, res in enumerate(results)]
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_colored_cloud(
    path: str | Path, cloud: PointCloud, results: Sequence[LocalizationResult]
) -> None:
    """ASCII PLY with damage points colored by class, others gray."""
    colors = np.tile(np.array(CLEAN_COLOR, dtype=np.int64), (len(cloud), 1))
    for res in results:
        colors[res.indices] = class_color(res.class_id)
    write_ply(path, cloud, colors=colors)
