"""Shared helpers: random rotations, finite differences, differentiable box
sampling, and the seeded fuselage sweep reused by the localization and
acceptance suites."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import pytest

from jddl.boxes import CenterBox
from jddl.geometry import CameraIntrinsics
from jddl.localization import LocalizationOptions, localize_damage
from jddl.losses import ciou_alpha, ciou_loss, inner_ciou_loss, inner_iou, iou
from jddl.simulator import (
    CameraRigSpec,
    SceneSpec,
    SurfacePatch,
    best_view_for_patch,
    generate_camera_ring,
    generate_scene,
    ground_truth_bbox,
)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation from a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


# --- finite differences -----------------------------------------------------


def fd_gradient(fn, box: CenterBox, step_scale: float = 1e-5) -> np.ndarray:
    """Central finite differences wrt (x_c, y_c, w, h), step 1e-5 * scale."""
    params = np.array([box.x_c, box.y_c, box.w, box.h], dtype=np.float64)
    grad = np.zeros(4)
    for i in range(4):
        step = step_scale * max(1.0, abs(params[i]))
        plus = params.copy()
        minus = params.copy()
        plus[i] += step
        minus[i] -= step
        grad[i] = (fn(CenterBox(*plus)) - fn(CenterBox(*minus))) / (2.0 * step)
    return grad


def gradcheck_ok(analytic: np.ndarray, numeric: np.ndarray, rtol: float = 1e-4) -> bool:
    err = np.abs(analytic - numeric)
    ref = np.maximum(np.abs(analytic), np.abs(numeric))
    return bool(np.all((err <= rtol * ref) | (err <= 1e-8)))


def loss_closure(loss_id: str, gt: CenterBox, ratio: float, alpha: float):
    """Value function of the pred box with CIoU's aspect weight frozen."""
    if loss_id == "iou":
        return lambda b: 1.0 - iou(b, gt)
    if loss_id == "inner_iou":
        return lambda b: 1.0 - inner_iou(b, gt, ratio)
    if loss_id == "ciou":
        return lambda b: ciou_loss(b, gt, alpha=alpha)
    if loss_id == "inner_ciou":
        return lambda b: inner_ciou_loss(b, gt, ratio, alpha=alpha)
    from jddl.losses import loss_value

    return lambda b: loss_value(loss_id, b, gt, ratio)


def _branch_margins(pred: CenterBox, gt: CenterBox, ratio: float) -> float:
    """Smallest distance to any min/max branch switch or overlap kink."""
    margins = []
    for r in (1.0, ratio):
        pl = pred.x_c - pred.w * r / 2
        pr = pred.x_c + pred.w * r / 2
        pt = pred.y_c - pred.h * r / 2
        pb = pred.y_c + pred.h * r / 2
        gl = gt.x_c - gt.w * r / 2
        gr = gt.x_c + gt.w * r / 2
        gtp = gt.y_c - gt.h * r / 2
        gb = gt.y_c + gt.h * r / 2
        margins += [abs(pl - gl), abs(pr - gr), abs(pt - gtp), abs(pb - gb)]
        margins += [abs(min(pr, gr) - max(pl, gl)), abs(min(pb, gb) - max(pt, gtp))]
    return min(margins)


def sample_differentiable_case(rng: np.random.Generator, margin: float = 1e-3):
    """(pred, gt, ratio) safely away from every kink, sizes bounded below."""
    while True:
        pred = CenterBox(
            rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0.2, 5), rng.uniform(0.2, 5)
        )
        gt = CenterBox(
            rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0.2, 5), rng.uniform(0.2, 5)
        )
        ratio = rng.uniform(0.5, 1.5)
        if _branch_margins(pred, gt, ratio) > margin:
            return pred, gt, ratio


# --- seeded fuselage sweep ---------------------------------------------------
#
# 100 scenes of ~1.03e5 points on a 2 m x 10 m cylinder, four damage
# patches per scene placed near the camera ring station, viewed by a
# 4-camera ring. Each patch is localized from its best-visibility camera
# in both selection modes.

SWEEP_N_SCENES = 100
SWEEP_SPEC = dict(radius=2.0, length=10.0, spacing=0.035)
SWEEP_RIG = CameraRigSpec(
    count=4,
    ring_radius=24.0,
    heights=(5.0,),
    intrinsics=CameraIntrinsics(1400.0, 1400.0, 512.0, 512.0),
)
SWEEP_OPTIONS = LocalizationOptions(
    occlusion_culling=True, zbuffer_cell=4.0, depth_tolerance=0.02
)
SWEEP_OPTIONS_BP = LocalizationOptions(
    occlusion_culling=True,
    zbuffer_cell=4.0,
    depth_tolerance=0.02,
    selection_mode="backprojected",
)


def make_sweep_scene_spec(seed: int) -> SceneSpec:
    """Four non-overlapping patches near the ring station, any azimuth."""
    rng = np.random.default_rng(seed)
    patches: list[SurfacePatch] = []
    tries = 0
    while len(patches) < 4 and tries < 300:
        tries += 1
        axial = rng.uniform(4.3, 5.7)
        azimuth = rng.uniform(0.0, 2.0 * math.pi)
        radius = rng.uniform(0.3, 0.45)
        clear = True
        for p in patches:
            d_axial = abs(axial - p.axial)
            d_arc = SWEEP_SPEC["radius"] * abs(
                (azimuth - p.azimuth + math.pi) % (2.0 * math.pi) - math.pi
            )
            if max(d_axial, d_arc) < radius + p.radius + 0.3:
                clear = False
                break
        if clear:
            patches.append(SurfacePatch(axial, azimuth, radius, int(rng.integers(0, 11))))
    return SceneSpec(patches=tuple(patches), seed=seed, **SWEEP_SPEC)


@dataclass(frozen=True)
class SweepPair:
    """One (patch, best camera) evaluation from the fuselage sweep."""

    scene_seed: int
    patch_id: int
    n_selected: int
    n_visible: int
    precision: float
    recall: float
    parity_max_abs: float
    front_facing_fraction: float


@dataclass(frozen=True)
class SweepOutcome:
    pairs: tuple[SweepPair, ...]
    n_points_per_scene: int
    duration_s: float


@pytest.fixture(scope="session")
def fuselage_sweep() -> SweepOutcome:
    started = time.monotonic()
    cameras = generate_camera_ring(SWEEP_RIG)
    pairs: list[SweepPair] = []
    n_points = 0
    for seed in range(SWEEP_N_SCENES):
        scene = generate_scene(make_sweep_scene_spec(seed))
        n_points = len(scene.cloud)
        for pid in range(1, len(scene.spec.patches) + 1):
            cam_idx, visible = best_view_for_patch(scene, pid, cameras, SWEEP_OPTIONS)
            if visible.size == 0:
                continue
            intrinsics, pose = cameras[cam_idx]
            bbox = ground_truth_bbox(scene, pid, intrinsics, pose, SWEEP_OPTIONS)
            result = localize_damage(bbox, intrinsics, pose, scene.cloud, SWEEP_OPTIONS)
            result_bp = localize_damage(bbox, intrinsics, pose, scene.cloud, SWEEP_OPTIONS_BP)
            assert np.array_equal(result.indices, result_bp.indices)
            parity = (
                float(np.max(np.abs(result.points - result_bp.points)))
                if result.n_points
                else 0.0
            )
            labels = scene.cloud.labels[result.indices]
            precision = float(np.mean(labels == pid)) if result.n_points else 0.0
            recall = np.isin(visible, result.indices).mean()
            center = pose.camera_center()
            to_points = scene.cloud.points[result.indices] - center
            facing = np.einsum("ij,ij->i", scene.normals[result.indices], to_points) < 0
            pairs.append(
                SweepPair(
                    scene_seed=seed,
                    patch_id=pid,
                    n_selected=result.n_points,
                    n_visible=int(visible.size),
                    precision=precision,
                    recall=float(recall),
                    parity_max_abs=parity,
                    front_facing_fraction=float(np.mean(facing)) if result.n_points else 1.0,
                )
            )
    return SweepOutcome(tuple(pairs), n_points, time.monotonic() - started)
