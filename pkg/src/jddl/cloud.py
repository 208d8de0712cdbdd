"""Point-cloud container and ASCII file I/O (PLY and plain XYZ).

Only ASCII little-endian-free PLY is handled; binary PLY is rejected with
a clear error. Vertices carry x y z floats, optionally an integer label
and optionally uchar red/green/blue.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class PlyFormatError(ValueError):
    """Malformed or unsupported PLY content."""


@dataclass
class PointCloud:
    """Ordered 3D points (meters) with optional per-point integer labels."""

    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got shape {pts.shape}")
        self.points = pts
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (pts.shape[0],):
                raise ValueError(
                    f"labels length {lab.shape} does not match {pts.shape[0]} points"
                )
            if np.any(lab < 0):
                raise ValueError("labels must be non-negative")
            self.labels = lab

    def __len__(self) -> int:
        return int(self.points.shape[0])


def write_ply(
    path: str | Path,
    cloud: PointCloud,
    colors: np.ndarray | None = None,
) -> None:
    """Write an ASCII PLY file. Labels and colors are emitted when present."""
    n = len(cloud)
    if colors is not None:
        colors = np.asarray(colors, dtype=np.int64)
        if colors.shape != (n, 3):
            raise ValueError(f"colors must be ({n}, 3), got {colors.shape}")
        if colors.min() < 0 or colors.max() > 255:
            raise ValueError("colors must be uchar values in [0, 255]")
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {n}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if cloud.labels is not None:
        lines.append("property int label")
    if colors is not None:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines.append("end_header")
    for i in range(n):
        parts = [repr(float(c)) for c in cloud.points[i]]
        if cloud.labels is not None:
            parts.append(str(int(cloud.labels[i])))
        if colors is not None:
            parts += [str(int(c)) for c in colors[i]]
        lines.append(" ".join(parts))
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path: str | Path) -> PointCloud:
    """Read an ASCII PLY vertex cloud; x/y/z required, label kept if present."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PlyFormatError(f"{path}: missing 'ply' magic line")
    n_vertex = None
    properties: list[str] = []
    body_start = None
    in_vertex_element = False
    for i, raw in enumerate(lines[1:], start=1):
        line = raw.strip()
        if line.startswith("format"):
            if "ascii" not in line:
                raise PlyFormatError(f"{path}: only ASCII PLY is supported, got '{line}'")
        elif line.startswith("element"):
            fields = line.split()
            in_vertex_element = len(fields) == 3 and fields[1] == "vertex"
            if in_vertex_element:
                n_vertex = int(fields[2])
        elif line.startswith("property") and in_vertex_element:
            properties.append(line.split()[-1])
        elif line == "end_header":
            body_start = i + 1
            break
    if body_start is None or n_vertex is None:
        raise PlyFormatError(f"{path}: header missing end_header or vertex element")
    for needed in ("x", "y", "z"):
        if needed not in properties:
            raise PlyFormatError(f"{path}: vertex element lacks property '{needed}'")
    idx = {name: properties.index(name) for name in properties}
    rows = lines[body_start : body_start + n_vertex]
    if len(rows) < n_vertex:
        raise PlyFormatError(f"{path}: expected {n_vertex} vertex rows, found {len(rows)}")
    pts = np.empty((n_vertex, 3), dtype=np.float64)
    labels = np.empty(n_vertex, dtype=np.int64) if "label" in idx else None
    for r, raw in enumerate(rows):
        fields = raw.split()
        if len(fields) != len(properties):
            raise PlyFormatError(
                f"{path}: vertex row {r} has {len(fields)} fields, expected {len(properties)}"
            )
        try:
            pts[r, 0] = float(fields[idx["x"]])
            pts[r, 1] = float(fields[idx["y"]])
            pts[r, 2] = float(fields[idx["z"]])
            if labels is not None:
                labels[r] = int(fields[idx["label"]])
        except ValueError as exc:
            raise PlyFormatError(f"{path}: vertex row {r}: {exc}") from exc
    return PointCloud(pts, labels)


def write_xyz(path: str | Path, cloud: PointCloud) -> None:
    """Whitespace-separated x y z, one point per line. Labels are not stored."""
    with open(path, "w") as fh:
        for p in cloud.points:
            fh.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")


def read_xyz(path: str | Path) -> PointCloud:
    pts = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) < 3:
                raise ValueError(f"{path}:{lineno}: expected 'x y z', got '{line}'")
            try:
                pts.append([float(fields[0]), float(fields[1]), float(fields[2])])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return PointCloud(np.array(pts, dtype=np.float64).reshape(-1, 3))


def read_point_cloud(path: str | Path) -> PointCloud:
    """Dispatch on extension: .ply -> PLY, anything else -> plain XYZ."""
    if str(path).lower().endswith(".ply"):
        return read_ply(path)
    return read_xyz(path)
