"""Detection scoring: greedy matching, PR curves, AP50, and analysis metrics.

The protocol matches world-coordinate predictions to ground truth by IoU.
Predictions are visited in descending score order and claim the unclaimed
ground-truth box of highest IoU at or above the threshold; duplicates at an
already-claimed box count as false positives. AP uses all-point
interpolation: precision at each recall level is replaced by the maximum
precision at any recall at least that high, then integrated over recall.
AP is therefore invariant under strictly monotone rescoring.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .errors import B2NError, MissingClassifierScore
from .geodata import Detection, GeoBox, iou


class EmptyGroundTruth(B2NError):
    """Recall is undefined without ground truth."""


ScoreKey = Callable[[Detection], float]


def by_detector_score(det: Detection) -> float:
    return det.s_d


def by_fused_score(det: Detection) -> float:
    if det.fused is None:
        raise MissingClassifierScore("detection has no fused score")
    return det.fused


@dataclass(frozen=True)
class MatchRecord:
    detection: Detection
    is_tp: bool
    matched_gt: int | None
    rank_score: float


def match(preds: list[Detection], gts: list[GeoBox],
          iou_threshold: float = 0.5,
          key: ScoreKey = by_detector_score) -> tuple[list[MatchRecord], int]:
    """Greedy score-ordered matching; returns records and the unmatched-GT count.

    Score ties break by input order; IoU ties between candidate ground-truth
    boxes break toward the lower index. Records come back in rank order.
    """
    order = sorted(range(len(preds)), key=lambda i: (-key(preds[i]), i))
    claimed = [False] * len(gts)
    records = []
    for i in order:
        det = preds[i]
        best_iou, best_j = 0.0, None
        for j, gt in enumerate(gts):
            if claimed[j]:
                continue
            v = iou(det.box, gt)
            if v >= iou_threshold and v > best_iou:
                best_iou, best_j = v, j
        if best_j is not None:
            claimed[best_j] = True
            records.append(MatchRecord(det, True, best_j, key(det)))
        else:
            records.append(MatchRecord(det, False, None, key(det)))
    return records, claimed.count(False)


def _ranked(records: list[MatchRecord]) -> list[MatchRecord]:
    return sorted(records, key=lambda r: -r.rank_score)


def pr_curve(records: list[MatchRecord], n_gt: int,
             ) -> list[tuple[float, float, float]]:
    """(threshold, precision, recall) at every distinct score, descending."""
    if n_gt == 0:
        raise EmptyGroundTruth("recall undefined with zero ground-truth boxes")
    points = []
    tp = fp = 0
    ranked = _ranked(records)
    for idx, rec in enumerate(ranked):
        if rec.is_tp:
            tp += 1
        else:
            fp += 1
        last_of_score = idx + 1 == len(ranked) or \
            ranked[idx + 1].rank_score != rec.rank_score
        if last_of_score:
            points.append((rec.rank_score, tp / (tp + fp), tp / n_gt))
    return points


def ap50(records: list[MatchRecord], n_gt: int) -> float:
    """Area under the all-point interpolated precision-recall curve."""
    if n_gt < 1:
        raise EmptyGroundTruth("AP undefined with zero ground-truth boxes")
    tp = fp = 0
    recalls, precisions = [0.0], [1.0]
    for rec in _ranked(records):
        if rec.is_tp:
            tp += 1
        else:
            fp += 1
        recalls.append(tp / n_gt)
        precisions.append(tp / (tp + fp))
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    area = 0.0
    for i in range(1, len(recalls)):
        area += (recalls[i] - recalls[i - 1]) * precisions[i]
    return area


def max_recall_at_imprecision(records: list[MatchRecord], n_gt: int,
                              fp_per_tp: float = 100.0) -> float:
    """Highest recall reachable while precision stays >= 1/(1+fp_per_tp)."""
    if n_gt < 1:
        raise EmptyGroundTruth("recall undefined with zero ground-truth boxes")
    floor = 1.0 / (1.0 + fp_per_tp)
    best = 0.0
    for _, precision, recall in pr_curve(records, n_gt) if records else []:
        if precision >= floor:
            best = max(best, recall)
    return best


def quadrant_sweep(dets: list[Detection], gts: list[GeoBox],
                   iou_threshold: float = 0.5) -> set[tuple[float, float]]:
    """(precision, recall) for every upper-right-quadrant decision boundary.

    Thresholds for each score are the observed values plus -inf; a quadrant
    accepts detections strictly exceeding both of its thresholds. Each
    accepted subset is re-matched (ranked by detector score) because
    duplicate outcomes depend on which competitors survive the cut.
    Quadrants accepting nothing are skipped (precision undefined).
    """
    if not gts:
        raise EmptyGroundTruth("sweep undefined with zero ground-truth boxes")
    for det in dets:
        if det.s_c is None:
            raise MissingClassifierScore("quadrant sweep needs both scores")
    t_d = sorted({d.s_d for d in dets}) + [float("-inf")]
    t_c = sorted({d.s_c for d in dets}) + [float("-inf")]
    points = set()
    for td in t_d:
        for tc in t_c:
            subset = [d for d in dets if d.s_d > td and d.s_c > tc]
            if not subset:
                continue
            records, _ = match(subset, gts, iou_threshold)
            tp = sum(r.is_tp for r in records)
            points.add((tp / len(subset), tp / len(gts)))
    return points
