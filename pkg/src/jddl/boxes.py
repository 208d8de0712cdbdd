"""Axis-aligned 2D box types shared across the package.

Two parameterizations are used: corner form (x_min, y_min, x_max, y_max)
for detections and annotations, and center form (x_c, y_c, w, h) for the
regression losses. Both are immutable value types.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BBox2D:
    """Corner-form box, pixels. x grows right, y grows down."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate box: ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def area(self) -> float:
        return self.width * self.height

    def contains(self, x: float, y: float) -> bool:
        """Closed-interval containment on both axes."""
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def to_center(self) -> "CenterBox":
        return CenterBox(
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
            self.width,
            self.height,
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class CenterBox:
    """Center-form box: center (x_c, y_c), positive width and height."""

    x_c: float
    y_c: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box needs positive size, got w={self.w}, h={self.h}")

    def corners(self) -> tuple[float, float, float, float]:
        """(x_min, y_min, x_max, y_max)."""
        return (
            self.x_c - self.w / 2.0,
            self.y_c - self.h / 2.0,
            self.x_c + self.w / 2.0,
            self.y_c + self.h / 2.0,
        )

    def area(self) -> float:
        return self.w * self.h

    def to_bbox(self) -> BBox2D:
        x1, y1, x2, y2 = self.corners()
        return BBox2D(x1, y1, x2, y2)

    @classmethod
    def from_corners(cls, x_min: float, y_min: float, x_max: float, y_max: float) -> "CenterBox":
        return cls((x_min + x_max) / 2.0, (y_min + y_max) / 2.0, x_max - x_min, y_max - y_min)


def corner_iou(a: BBox2D, b: BBox2D) -> float:
    """Plain intersection-over-union of two corner-form boxes."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area() + b.area() - inter)
