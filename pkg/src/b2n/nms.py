"""Greedy non-maximum suppression in world coordinates.

Detections from overlapping chips duplicate each other; after lifting to
world coordinates a single class-agnostic greedy pass keeps the highest
ranked box of each overlap group. Ranking uses the raw detector score by
default (fusion happens downstream on the survivors).
"""

from __future__ import annotations

from typing import Callable

from .geodata import Detection, iou

ScoreKey = Callable[[Detection], float]


def by_detector_score(det: Detection) -> float:
    return det.s_d


def suppress(dets: list[Detection], iou_threshold: float = 0.5,
             key: ScoreKey = by_detector_score) -> list[Detection]:
    """Keep the best detection of every overlap group.

    Greedy: repeatedly keep the highest-ranked remaining detection and drop
    every remaining detection with IoU >= threshold against it. Ties break
    by earlier source_chip id (missing ids sort first), then input order.
    Output is in rank order, best first.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold {iou_threshold} not in (0, 1]")
    order = sorted(range(len(dets)),
                   key=lambda i: (-key(dets[i]), dets[i].source_chip or "", i))
    kept: list[Detection] = []
    for i in order:
        cand = dets[i]
        if all(iou(cand.box, k.box) < iou_threshold for k in kept):
            kept.append(cand)
    return kept
