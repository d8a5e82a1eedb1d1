"""Polygons, axis-aligned boxes, IoU, and target/background region assignment.

IoU is computed on the axis-aligned hulls of polygons. OCR quads in this
domain are close to axis-aligned, so exact polygon clipping is not used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

if TYPE_CHECKING:
    from .corpus import OcrDetection


@dataclass(frozen=True)
class Polygon:
    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.vertices) < 3:
            raise ValueError(f"polygon needs >= 3 vertices, got {len(self.vertices)}")
        for x, y in self.vertices:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValueError(f"non-finite polygon vertex ({x}, {y})")

    @classmethod
    def from_points(cls, points: Iterable[Sequence[float]]) -> "Polygon":
        verts = []
        for p in points:
            if len(p) != 2:
                raise ValueError(f"polygon vertex must be an [x, y] pair, got {p!r}")
            verts.append((float(p[0]), float(p[1])))
        return cls(tuple(verts))

    def to_list(self) -> list[list[float]]:
        return [[x, y] for x, y in self.vertices]


@dataclass(frozen=True)
class Box:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"inverted box {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def contains(self, x: float, y: float) -> bool:
        """Inclusive point containment."""
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass
class RegionAssignment:
    target_detections: list["OcrDetection"]
    background_detections: list["OcrDetection"]


def polygon_bbox(p: Polygon) -> Box:
    xs = [v[0] for v in p.vertices]
    ys = [v[1] for v in p.vertices]
    return Box(min(xs), min(ys), max(xs), max(ys))


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes.

    Two zero-area boxes have IoU 1 only if they are the same box, else 0.
    """
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    union = a.area + b.area - inter
    if union <= 0:
        return 1.0 if a == b else 0.0
    return inter / union


def assign_regions(
    detections: Sequence["OcrDetection"], target: Polygon, threshold: float = 0.5
) -> RegionAssignment:
    """Split detections into target (IoU > threshold) and background (the rest)."""
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    tbox = polygon_bbox(target)
    target_dets, background = [], []
    for det in detections:
        if iou(polygon_bbox(det.polygon), tbox) > threshold:
            target_dets.append(det)
        else:
            background.append(det)
    return RegionAssignment(target_dets, background)


def center_in_region(det: "OcrDetection", region: Polygon) -> bool:
    cx, cy = polygon_bbox(det.polygon).center
    return polygon_bbox(region).contains(cx, cy)
