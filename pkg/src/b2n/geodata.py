"""Coordinate and geometry model shared by every stage.

World coordinates are planar (a projected CRS is assumed); boxes are
axis-aligned in world space. Pixel (col, row) maps to world (x, y) through a
six-coefficient affine transform:

    x = a + b * col + c * row
    y = d + e * col + f * row

Transforms live next to rasters as ``<stem>.geo.json`` sidecars holding
``{"transform": [a, b, c, d, e, f]}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import B2NError


class SingularTransform(B2NError):
    """Affine transform with zero determinant; pixel/world maps undefined."""


class UnknownLabel(B2NError):
    """Class label absent from the hierarchy map."""


@dataclass(frozen=True)
class AffineGeoTransform:
    a: float
    b: float
    c: float
    d: float
    e: float
    f: float

    def __post_init__(self):
        if self.det == 0.0:
            raise SingularTransform(f"b*f - c*e = 0 for {self}")

    @property
    def det(self) -> float:
        return self.b * self.f - self.c * self.e

    def pixel_to_world(self, col: float, row: float) -> tuple[float, float]:
        return (self.a + self.b * col + self.c * row,
                self.d + self.e * col + self.f * row)

    def world_to_pixel(self, x: float, y: float) -> tuple[float, float]:
        dx, dy = x - self.a, y - self.d
        det = self.det
        col = (dx * self.f - dy * self.c) / det
        row = (dy * self.b - dx * self.e) / det
        return col, row

    def shifted(self, col0: float, row0: float) -> "AffineGeoTransform":
        """Transform for a window whose pixel origin sits at (col0, row0)."""
        x0, y0 = self.pixel_to_world(col0, row0)
        return AffineGeoTransform(x0, self.b, self.c, y0, self.e, self.f)

    def to_json(self, path) -> None:
        payload = {"transform": [self.a, self.b, self.c, self.d, self.e, self.f]}
        Path(path).write_text(json.dumps(payload) + "\n")

    @staticmethod
    def from_json(path) -> "AffineGeoTransform":
        coeffs = json.loads(Path(path).read_text())["transform"]
        return AffineGeoTransform(*map(float, coeffs))


IDENTITY_TRANSFORM = AffineGeoTransform(0.0, 1.0, 0.0, 0.0, 0.0, 1.0)


@dataclass(frozen=True)
class GeoBox:
    """Axis-aligned box in world coordinates; degenerate boxes are rejected."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float
    class_label: str = ""

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(f"degenerate box {self}")

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)


def iou(a: GeoBox, b: GeoBox) -> float:
    """Intersection over union; boundary-only contact counts as disjoint."""
    iw = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    ih = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class Detection:
    """A world-coordinate box with raw pre-sigmoid scores.

    ``s_d`` is the detector score; ``s_c`` the classifier score, present only
    for detections that passed the classification stage. ``fused`` is set by
    the fusion stage. Callers holding probabilities must apply logit before
    constructing a Detection: the fusion interface is pre-sigmoid throughout.
    """

    box: GeoBox
    s_d: float
    s_c: float | None = None
    fused: float | None = None
    source_chip: str | None = None


@dataclass(frozen=True)
class AnnotationSet:
    image_id: str
    gt: tuple[GeoBox, ...] = ()
    site_location: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        object.__setattr__(self, "gt", tuple(self.gt))


@dataclass(frozen=True)
class ClassHierarchy:
    """Total map from narrow (sub-class) labels to their broad parent label."""

    narrow_to_broad: dict[str, str] = field(default_factory=dict)

    def broad(self, label: str) -> str:
        try:
            return self.narrow_to_broad[label]
        except KeyError:
            raise UnknownLabel(f"no broad class for label {label!r}") from None


def relabel_broad(anns: AnnotationSet, hierarchy: ClassHierarchy) -> AnnotationSet:
    """Replace every narrow label with its parent; geometry untouched."""
    boxes = tuple(
        GeoBox(b.xmin, b.ymin, b.xmax, b.ymax, hierarchy.broad(b.class_label))
        for b in anns.gt
    )
    return AnnotationSet(anns.image_id, boxes, anns.site_location)
