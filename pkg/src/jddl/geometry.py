"""Pinhole camera model: projection matrix, point projection, back-projection.

COORDINATE CONVENTIONS
======================
World frame:  right-handed, meters.
Camera frame: right-handed, standard computer vision layout —
    X right, Y down, Z forward along the optical axis.
    A world point X_w maps into the camera frame as

        X_cam = R @ X_w + T

    so (R, T) is the world-to-camera rigid transform.
Image frame:  pixels, origin top-left, u right, v down.

The projection matrix is P = K @ [R | T] with

    K = [[fx, 0, cx],
         [0, fy, cy],
         [0,  0,  1]]

(zero skew, no lens distortion). Projection of X_w computes the
homogeneous triple (a, b, w) = P @ (X_w, 1); the pixel is (a/w, b/w)
and w is the camera-frame depth Z. Back-projection inverts the pinhole
map exactly for a pixel with known positive depth:

    X_cam = Z * ((u - cx)/fx, (v - cy)/fy, 1)
    X_w   = R^T @ (X_cam - T)

Depth always means camera-frame Z, not distance along the viewing ray.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

ROTATION_TOL = 1e-9

_CONVENTION_NOTE = "X_cam = R @ X_world + T; u right, v down; depth = camera-frame Z"


class SingularProjectionError(ValueError):
    """Point lies in the camera's principal plane (homogeneous w = 0)."""


class PixelDepth(NamedTuple):
    """Pixel coordinate with camera-frame depth."""

    u: float
    v: float
    depth: float

    @property
    def behind_camera(self) -> bool:
        return self.depth <= 0.0


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def matrix(self) -> np.ndarray:
        """3x3 intrinsic matrix K (zero skew)."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera rigid transform: X_cam = R @ X_world + T."""

    R: np.ndarray
    T: np.ndarray

    def __post_init__(self) -> None:
        R = np.asarray(self.R, dtype=np.float64)
        T = np.asarray(self.T, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got shape {R.shape}")
        ortho_err = float(np.max(np.abs(R.T @ R - np.eye(3))))
        if ortho_err > ROTATION_TOL:
            raise ValueError(
                f"rotation matrix is not orthogonal: max |R^T R - I| = {ortho_err:.3e}"
            )
        det_err = abs(float(np.linalg.det(R)) - 1.0)
        if det_err > ROTATION_TOL:
            raise ValueError(f"rotation matrix determinant is not +1: |det - 1| = {det_err:.3e}")
        R.setflags(write=False)
        T.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)

    def camera_center(self) -> np.ndarray:
        """Camera center in world coordinates: C = -R^T @ T."""
        return -self.R.T @ self.T


@dataclass(frozen=True)
class ProjectionMatrix:
    """3x4 projection P = K @ [R | T]. Build via build_projection, never free-form."""

    P: np.ndarray

    def __post_init__(self) -> None:
        P = np.asarray(self.P, dtype=np.float64)
        if P.shape != (3, 4):
            raise ValueError(f"projection matrix must be 3x4, got shape {P.shape}")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)


def build_projection(intrinsics: CameraIntrinsics, pose: CameraPose) -> ProjectionMatrix:
    """Compose P = K @ [R | T].

    Row 3 of P equals [row 3 of R | T_z] exactly because the last row of K
    is (0, 0, 1).
    """
    rt = np.hstack([pose.R, pose.T.reshape(3, 1)])
    return ProjectionMatrix(intrinsics.matrix() @ rt)


def _as_matrix(P: ProjectionMatrix | np.ndarray) -> np.ndarray:
    if isinstance(P, ProjectionMatrix):
        return P.P
    return np.asarray(P, dtype=np.float64)


def project_point(P: ProjectionMatrix | np.ndarray, point: np.ndarray) -> PixelDepth:
    """Project one world point; the returned depth is the homogeneous w.

    Raises SingularProjectionError when w = 0 (point in the principal
    plane). A negative depth is returned as-is so callers can flag the
    point as behind the camera (see PixelDepth.behind_camera).
    """
    M = _as_matrix(P)
    X = np.asarray(point, dtype=np.float64).reshape(3)
    a, b, w = M[:, :3] @ X + M[:, 3]
    if w == 0.0:
        raise SingularProjectionError(f"point {X.tolist()} projects to homogeneous w = 0")
    return PixelDepth(a / w, b / w, w)


def project_points(
    P: ProjectionMatrix | np.ndarray, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection of an (N, 3) array of world points.

    Returns (u, v, depth) arrays of length N. Points with w = 0 get
    u = v = +inf rather than NaN; their depth entry is 0, which every
    downstream consumer discards via the depth > 0 mask.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must be (N, 3), got shape {pts.shape}")
    M = _as_matrix(P)
    homo = pts @ M[:, :3].T + M[:, 3]
    w = homo[:, 2]
    safe = np.where(w == 0.0, 1.0, w)
    u = np.where(w == 0.0, np.inf, homo[:, 0] / safe)
    v = np.where(w == 0.0, np.inf, homo[:, 1] / safe)
    return u, v, w


def back_project(
    intrinsics: CameraIntrinsics, pose: CameraPose, pixel: PixelDepth
) -> np.ndarray:
    """Recover the world point for a pixel with known positive depth."""
    if not pixel.depth > 0:
        raise ValueError(f"back-projection needs depth > 0, got {pixel.depth}")
    x_cam = np.array(
        [
            pixel.depth * (pixel.u - intrinsics.cx) / intrinsics.fx,
            pixel.depth * (pixel.v - intrinsics.cy) / intrinsics.fy,
            pixel.depth,
        ]
    )
    return pose.R.T @ (x_cam - pose.T)


def back_project_pixels(
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    u: np.ndarray,
    v: np.ndarray,
    depth: np.ndarray,
) -> np.ndarray:
    """Vectorized back-projection; returns an (N, 3) array of world points."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0):
        raise ValueError("back-projection needs depth > 0 for every pixel")
    x_cam = np.stack(
        [
            depth * (u - intrinsics.cx) / intrinsics.fx,
            depth * (v - intrinsics.cy) / intrinsics.fy,
            depth,
        ],
        axis=1,
    )
    return (x_cam - pose.T) @ pose.R


# --- camera rig JSON -----------------------------------------------------
#
# Schema: { "fx":..., "fy":..., "cx":..., "cy":...,
#           "R": [9 numbers, row-major], "T": [3 numbers] }
# plus an informational "convention" string. The reader re-validates the
# rotation invariants on load.


def camera_to_dict(intrinsics: CameraIntrinsics, pose: CameraPose) -> dict:
    return {
        "fx": intrinsics.fx,
        "fy": intrinsics.fy,
        "cx": intrinsics.cx,
        "cy": intrinsics.cy,
        "R": [float(x) for x in pose.R.reshape(9)],
        "T": [float(x) for x in pose.T],
        "convention": _CONVENTION_NOTE,
    }


def camera_from_dict(data: dict) -> tuple[CameraIntrinsics, CameraPose]:
    try:
        intr = CameraIntrinsics(
            float(data["fx"]), float(data["fy"]), float(data["cx"]), float(data["cy"])
        )
        R = np.array(data["R"], dtype=np.float64).reshape(3, 3)
        T = np.array(data["T"], dtype=np.float64).reshape(3)
    except KeyError as exc:
        raise ValueError(f"camera JSON missing required key: {exc}") from exc
    return intr, CameraPose(R, T)


def save_camera_json(path: str | Path, intrinsics: CameraIntrinsics, pose: CameraPose) -> None:
    Path(path).write_text(json.dumps(camera_to_dict(intrinsics, pose), indent=2) + "\n")


def load_camera_json(path: str | Path) -> tuple[CameraIntrinsics, CameraPose]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"camera JSON {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"camera JSON {path} must hold a single object")
    return camera_from_dict(data)
