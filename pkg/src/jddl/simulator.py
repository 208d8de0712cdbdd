"""Deterministic synthetic fuselage scenes for end-to-end validation.

A scene is a cylindrical fuselage surface sampled on a regular
(azimuth x axial) lattice with small per-point jitter, plus labeled
damage patches. The cylinder axis is the world X axis: a surface point at
axial position a and azimuth theta sits at

    (a, r * cos(theta), r * sin(theta))

with outward normal (0, cos(theta), sin(theta)). A patch covers the
points within its radius of the anchor along each unrolled-surface axis
(axial offset and arc length r * dtheta measured independently), so its
footprint is an axis-aligned square on the unrolled surface and its
image under a perpendicular camera is box-shaped; see the patch-shape
note in the repo docs. Labels are 1-based patch numbers, 0 = clean.

Randomness is a counter-based hash of (seed, lattice index), so output
is bit-identical regardless of generation order or parallelism.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boxes import BBox2D
from .cloud import PointCloud
from .geometry import CameraIntrinsics, CameraPose, build_projection, project_points
from .localization import LocalizationOptions, zbuffer_visibility

JITTER_FRACTION = 0.4  # of one lattice cell, keeps points inside their cell


@dataclass(frozen=True)
class SurfacePatch:
    """Damage patch anchored at (axial, azimuth) with a geodesic half-extent."""

    axial: float
    azimuth: float
    radius: float
    class_id: int

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError(f"patch radius must be positive, got {self.radius}")
        if self.class_id < 0:
            raise ValueError(f"patch class id must be non-negative, got {self.class_id}")


@dataclass(frozen=True)
class SceneSpec:
    radius: float
    length: float
    spacing: float
    patches: tuple[SurfacePatch, ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.radius, self.length, self.spacing) <= 0:
            raise ValueError("cylinder radius, length, and point spacing must be positive")
        for patch in self.patches:
            if patch.radius >= self.radius:
                raise ValueError(
                    f"patch radius {patch.radius} must be smaller than the cylinder radius"
                )
            if not (0.0 <= patch.axial <= self.length):
                raise ValueError(f"patch axial position {patch.axial} outside [0, {self.length}]")


@dataclass(frozen=True)
class CameraRigSpec:
    """Ring(s) of cameras around the fuselage axis, aimed at it."""

    count: int
    ring_radius: float
    heights: tuple[float, ...]
    intrinsics: CameraIntrinsics
    image_width: int = 1024
    image_height: int = 1024

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError(f"camera count must be >= 1, got {self.count}")
        if not self.ring_radius > 0:
            raise ValueError(f"ring radius must be positive, got {self.ring_radius}")
        if not self.heights:
            raise ValueError("at least one ring station is required")


@dataclass
class SimulatedScene:
    spec: SceneSpec
    cloud: PointCloud
    normals: np.ndarray
    n_azimuth: int
    n_axial: int


# counter-based uniform hash (splitmix64-style finalizer)

_M = np.uint64(0xFFFFFFFFFFFFFFFF)
_C1 = np.uint64(0x9E3779B97F4A7C15)
_C2 = np.uint64(0xBF58476D1CE4E5B9)
_C3 = np.uint64(0x94D049BB133111EB)


def _hash_uniform(seed: int, index: np.ndarray, stream: int) -> np.ndarray:
    """Deterministic uniforms in [0, 1) keyed by (seed, index, stream)."""
    base = (seed * 0x9E3779B97F4A7C15 + stream * 0x94D049BB133111EB) % (1 << 64)
    with np.errstate(over="ignore"):  # uint64 arithmetic is modular by design
        z = (np.uint64(base) + index.astype(np.uint64) * _C2) & _M
        z = (z ^ (z >> np.uint64(30))) * _C2 & _M
        z = (z ^ (z >> np.uint64(27))) * _C3 & _M
        z ^= z >> np.uint64(31)
    return z.astype(np.float64) / 2.0**64


def _wrap_angle(theta: np.ndarray) -> np.ndarray:
    """Wrap to (-pi, pi]."""
    return theta - 2.0 * np.pi * np.round(theta / (2.0 * np.pi))


def generate_scene(spec: SceneSpec) -> SimulatedScene:
    """Sample the cylinder lattice and label patch membership.

    The point count is exactly ceil(2*pi*r / spacing) * ceil(length / spacing).
    When patches overlap, the later patch wins and a warning is emitted.
    """
    n_theta = math.ceil(2.0 * math.pi * spec.radius / spec.spacing)
    n_axial = math.ceil(spec.length / spec.spacing)
    idx = np.arange(n_theta * n_axial, dtype=np.int64)
    i_theta = idx // n_axial
    i_axial = idx % n_axial

    theta_step = 2.0 * math.pi / n_theta
    axial_step = spec.length / n_axial
    jit_t = (_hash_uniform(spec.seed, idx, 0) - 0.5) * JITTER_FRACTION * theta_step
    jit_a = (_hash_uniform(spec.seed, idx, 1) - 0.5) * JITTER_FRACTION * axial_step
    theta = (i_theta + 0.5) * theta_step + jit_t
    axial = (i_axial + 0.5) * axial_step + jit_a

    points = np.stack(
        [axial, spec.radius * np.cos(theta), spec.radius * np.sin(theta)], axis=1
    )
    normals = np.stack([np.zeros_like(theta), np.cos(theta), np.sin(theta)], axis=1)

    labels = np.zeros(len(idx), dtype=np.int64)
    for k, patch in enumerate(spec.patches, start=1):
        d_axial = np.abs(axial - patch.axial)
        d_arc = np.abs(spec.radius * _wrap_angle(theta - patch.azimuth))
        inside = (d_axial <= patch.radius) & (d_arc <= patch.radius)
        stolen = inside & (labels != 0)
        if np.any(stolen):
            warnings.warn(
                f"patch {k} overlaps an earlier patch on {int(stolen.sum())} points; "
                "later patch wins"
            )
        labels[inside] = k
    return SimulatedScene(spec, PointCloud(points, labels), normals, n_theta, n_axial)


def _look_at_axis(center: np.ndarray, station: float) -> CameraPose:
    """World-to-camera pose looking at the axis point (station, 0, 0)."""
    target = np.array([station, 0.0, 0.0])
    forward = target - center
    forward /= np.linalg.norm(forward)
    axis_dir = np.array([1.0, 0.0, 0.0])
    right = np.cross(axis_dir, forward)
    norm = np.linalg.norm(right)
    if norm < 1e-12:
        raise ValueError("camera sits on the fuselage axis; viewing direction undefined")
    right /= norm
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    return CameraPose(R, -R @ center)


def generate_camera_ring(rig: CameraRigSpec) -> list[tuple[CameraIntrinsics, CameraPose]]:
    """`count` cameras evenly spaced in azimuth at every ring station.

    Each camera sits at distance ring_radius from the axis and points at
    the axis point of its station, so its optical axis crosses the axis
    perpendicular to it.
    """
    cameras = []
    for station in rig.heights:
        for i in range(rig.count):
            phi = 2.0 * math.pi * i / rig.count
            center = np.array(
                [station, rig.ring_radius * math.cos(phi), rig.ring_radius * math.sin(phi)]
            )
            cameras.append((rig.intrinsics, _look_at_axis(center, station)))
    return cameras


def visible_patch_indices(
    scene: SimulatedScene,
    patch_id: int,
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    options: LocalizationOptions = LocalizationOptions(occlusion_culling=True),
) -> np.ndarray:
    """Indices of the patch's points that survive the z-buffer test."""
    if not (1 <= patch_id <= len(scene.spec.patches)):
        raise ValueError(f"patch id {patch_id} outside 1..{len(scene.spec.patches)}")
    u, v, depth = project_points(build_projection(intrinsics, pose), scene.cloud.points)
    front = depth > 0.0
    visible = np.zeros(len(scene.cloud), dtype=bool)
    visible[front] = zbuffer_visibility(
        np.stack([u[front], v[front], depth[front]], axis=1),
        options.zbuffer_cell,
        options.depth_tolerance,
    )
    return np.flatnonzero(visible & (scene.cloud.labels == patch_id))


def patch_anchor(scene: SimulatedScene, patch_id: int) -> tuple[np.ndarray, np.ndarray]:
    """World-space anchor point and outward normal of a patch."""
    patch = scene.spec.patches[patch_id - 1]
    anchor = np.array(
        [
            patch.axial,
            scene.spec.radius * math.cos(patch.azimuth),
            scene.spec.radius * math.sin(patch.azimuth),
        ]
    )
    normal = np.array([0.0, math.cos(patch.azimuth), math.sin(patch.azimuth)])
    return anchor, normal


def best_view_for_patch(
    scene: SimulatedScene,
    patch_id: int,
    cameras: list[tuple[CameraIntrinsics, CameraPose]],
    options: LocalizationOptions = LocalizationOptions(occlusion_culling=True),
) -> tuple[int, np.ndarray]:
    """Camera index that sees the patch best, with the visible indices.

    Ranks by visible-point count, then by frontality (alignment of the
    patch normal with the direction to the camera), so a fully visible
    but grazing view never beats a fully visible frontal one.
    """
    anchor, normal = patch_anchor(scene, patch_id)
    best_idx, best_vis, best_key = -1, np.zeros(0, dtype=np.int64), None
    for ci, (intrinsics, pose) in enumerate(cameras):
        vis = visible_patch_indices(scene, patch_id, intrinsics, pose, options)
        to_cam = pose.camera_center() - anchor
        frontality = float(normal @ (to_cam / np.linalg.norm(to_cam)))
        key = (vis.size, frontality)
        if best_key is None or key > best_key:
            best_idx, best_vis, best_key = ci, vis, key
    return best_idx, best_vis


def ground_truth_bbox(
    scene: SimulatedScene,
    patch_id: int,
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    options: LocalizationOptions = LocalizationOptions(occlusion_culling=True),
) -> BBox2D | None:
    """Tight pixel bounds of the patch's visible points; None if hidden.

    A degenerate axis (single visible point) is padded by half a pixel so
    the box stays valid.
    """
    idx = visible_patch_indices(scene, patch_id, intrinsics, pose, options)
    if idx.size == 0:
        return None
    u, v, _ = project_points(build_projection(intrinsics, pose), scene.cloud.points[idx])
    x0, x1 = float(u.min()), float(u.max())
    y0, y1 = float(v.min()), float(v.max())
    if x0 == x1:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y0 == y1:
        y0, y1 = y0 - 0.5, y1 + 0.5
    return BBox2D(x0, y0, x1, y1)


# --- scene configuration files -------------------------------------------
#
# JSON layout:
# {
#   "fuselage": {"radius": 2.0, "length": 10.0, "spacing": 0.05},
#   "patches": [{"axial": 3.0, "azimuth_deg": 40.0, "radius": 0.5, "class_id": 3}],
#   "seed": 7,
#   "rig": {"count": 4, "ring_radius": 10.0, "heights": [5.0],
#           "fx": 600.0, "fy": 600.0, "cx": 512.0, "cy": 512.0,
#           "image_width": 1024, "image_height": 1024}
# }


def load_scene_config(path: str | Path) -> tuple[SceneSpec, CameraRigSpec]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"scene config {path} is not valid JSON: {exc}") from exc
    try:
        fus = data["fuselage"]
        patches = tuple(
            SurfacePatch(
                axial=float(p["axial"]),
                azimuth=math.radians(float(p["azimuth_deg"])),
                radius=float(p["radius"]),
                class_id=int(p["class_id"]),
            )
            for p in data.get("patches", [])
        )
        spec = SceneSpec(
            radius=float(fus["radius"]),
            length=float(fus["length"]),
            spacing=float(fus["spacing"]),
            patches=patches,
            seed=int(data.get("seed", 0)),
        )
        rig_data = data["rig"]
        rig = CameraRigSpec(
            count=int(rig_data["count"]),
            ring_radius=float(rig_data["ring_radius"]),
            heights=tuple(float(h) for h in rig_data["heights"]),
            intrinsics=CameraIntrinsics(
                float(rig_data["fx"]),
                float(rig_data["fy"]),
                float(rig_data["cx"]),
                float(rig_data["cy"]),
            ),
            image_width=int(rig_data.get("image_width", 1024)),
            image_height=int(rig_data.get("image_height", 1024)),
        )
    except KeyError as exc:
        raise ValueError(f"scene config {path} missing key: {exc}") from exc
    if rig.ring_radius <= spec.radius:
        raise ValueError(
            f"ring radius {rig.ring_radius} must exceed the cylinder radius {spec.radius}"
        )
    return spec, rig
