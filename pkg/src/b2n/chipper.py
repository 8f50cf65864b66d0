"""Chip decomposition, lifting, classifier crops, and geographic splits.

Large rasters are decomposed into fixed-size overlapping chips for
inference; chip-local detections are lifted back to world coordinates
through each chip's own geotransform. Edge chips are shifted inward, never
padded, so every window lies fully inside the raster whenever the raster is
at least one chip wide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import B2NError
from .geodata import (IDENTITY_TRANSFORM, AffineGeoTransform, AnnotationSet,
                      Detection, GeoBox)
from .raster import ImageBuffer


class InvalidOverlap(B2NError):
    """overlap_fraction outside [0, 1)."""


@dataclass(frozen=True)
class Chip:
    id: str
    col0: int
    row0: int
    col1: int
    row1: int
    transform: AffineGeoTransform


@dataclass(frozen=True)
class ChipGrid:
    width: int
    height: int
    chip_size: int
    stride: int
    chips: tuple[Chip, ...]


def _axis_starts(length: int, chip_size: int, stride: int) -> list[int]:
    if length <= chip_size:
        return [0]
    starts = list(range(0, length - chip_size + 1, stride))
    if starts[-1] + chip_size < length:
        starts.append(length - chip_size)
    return starts


def plan_grid(raster_dims: tuple[int, int], chip_size: int,
              overlap_fraction: float = 0.2,
              transform: AffineGeoTransform = IDENTITY_TRANSFORM) -> ChipGrid:
    """Row-major grid of overlapping chip windows covering the raster.

    ``raster_dims`` is (width, height). Stride is
    round(chip_size * (1 - overlap_fraction)), clamped to at least 1 pixel.
    """
    if not 0.0 <= overlap_fraction < 1.0:
        raise InvalidOverlap(f"overlap_fraction {overlap_fraction} not in [0, 1)")
    if chip_size < 1:
        raise ValueError("chip_size must be >= 1")
    width, height = raster_dims
    stride = max(1, round(chip_size * (1.0 - overlap_fraction)))
    col_starts = _axis_starts(width, chip_size, stride)
    row_starts = _axis_starts(height, chip_size, stride)
    chips = []
    for ri, row0 in enumerate(row_starts):
        for ci, col0 in enumerate(col_starts):
            col1 = min(col0 + chip_size, width)
            row1 = min(row0 + chip_size, height)
            chips.append(Chip(f"r{ri:03d}c{ci:03d}", col0, row0, col1, row1,
                              transform.shifted(col0, row0)))
    return ChipGrid(width, height, chip_size, stride, tuple(chips))


def extract_chip(image: ImageBuffer, chip: Chip) -> ImageBuffer:
    return ImageBuffer(np.ascontiguousarray(
        image.data[chip.row0:chip.row1, chip.col0:chip.col1]))


def lift(dets: list[Detection], chip: Chip) -> list[Detection]:
    """Map chip-pixel detections to world coordinates.

    Box corners go through the chip geotransform and the axis-aligned hull
    is rebuilt (rotated transforms therefore widen boxes). Scores are
    untouched; ``source_chip`` is set to the chip id.
    """
    out = []
    for det in dets:
        b = det.box
        corners = [chip.transform.pixel_to_world(c, r)
                   for c in (b.xmin, b.xmax) for r in (b.ymin, b.ymax)]
        xs = [p[0] for p in corners]
        ys = [p[1] for p in corners]
        world = GeoBox(min(xs), min(ys), max(xs), max(ys), b.class_label)
        out.append(replace(det, box=world, source_chip=chip.id))
    return out


def concentric_crop(image: ImageBuffer, center: tuple[float, float],
                    size: int) -> ImageBuffer:
    """size x size crop centered on a pixel point; outside area is zero.

    The window origin is floor(center - size/2) on each axis, which keeps
    even-size crops deterministic.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    cx, cy = center
    col0 = math.floor(cx - size / 2)
    row0 = math.floor(cy - size / 2)
    out = np.zeros((size, size, image.channels), dtype=np.uint8)
    src_c0, src_r0 = max(col0, 0), max(row0, 0)
    src_c1 = min(col0 + size, image.width)
    src_r1 = min(row0 + size, image.height)
    if src_c0 < src_c1 and src_r0 < src_r1:
        out[src_r0 - row0:src_r1 - row0, src_c0 - col0:src_c1 - col0] = \
            image.data[src_r0:src_r1, src_c0:src_c1]
    return ImageBuffer(out)


def _single_linkage_clusters(sites: list[tuple[float, float]],
                             min_separation: float) -> list[list[int]]:
    # Union-find over pairs strictly closer than the threshold; clusters at
    # exactly min_separation may land in different splits.
    parent = list(range(len(sites)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(sites)):
        for j in range(i + 1, len(sites)):
            if math.dist(sites[i], sites[j]) < min_separation:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(len(sites)):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def geo_split(anns: list[AnnotationSet], min_separation: float,
              ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
              ) -> tuple[list[AnnotationSet], list[AnnotationSet], list[AnnotationSet]]:
    """Cluster images by site proximity and assign whole clusters to splits.

    Single-linkage clustering at ``min_separation`` guarantees that no two
    images closer than the threshold land in different splits. Clusters are
    assigned greedily, largest first, each to the split currently furthest
    below its target ratio (ties resolve train, then val, then test).
    """
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be positive and sum to 1, got {ratios}")
    if not anns:
        return [], [], []
    clusters = _single_linkage_clusters([a.site_location for a in anns],
                                        min_separation)
    clusters.sort(key=lambda c: (-len(c), min(c)))
    total = len(anns)
    counts = [0, 0, 0]
    splits: tuple[list[AnnotationSet], ...] = ([], [], [])
    for cluster in clusters:
        deficits = [ratios[s] - counts[s] / total for s in range(3)]
        target = max(range(3), key=lambda s: (deficits[s], -s))
        for idx in sorted(cluster):
            splits[target].append(anns[idx])
        counts[target] += len(cluster)
    return splits
