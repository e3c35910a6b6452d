"""Box geometry: IoU, greedy prediction/ground-truth matching and label
imputation for predicted hotspots."""

from __future__ import annotations

from dataclasses import dataclass, field

from .dataset import Annotation, BoundingBox


@dataclass(frozen=True)
class ScoredBox:
    bbox: BoundingBox
    score: float
    source_id: str = ""


@dataclass
class MatchResult:
    """One-to-one matching between predictions and ground-truth boxes.

    pairs holds (pred_index, gt_index, iou); indices refer to the input lists.
    """

    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    unmatched_preds: list[int] = field(default_factory=list)
    unmatched_gts: list[int] = field(default_factory=list)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area, in [0, 1]."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


def centroid(b: BoundingBox) -> tuple[float, float]:
    return ((b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0)


def match_greedy(
    preds: list[ScoredBox], gts: list[BoundingBox], iou_threshold: float = 0.5
) -> MatchResult:
    """Match predictions to ground truth greedily in descending score order.

    Score ties break toward the lower input index. Each prediction takes the
    still-unmatched ground-truth box with the highest IoU at or above the
    threshold (IoU ties toward the lower gt index); matching is one-to-one.
    """
    if not (0 < iou_threshold <= 1):
        raise ValueError("iou_threshold must be in (0, 1]")
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    taken = [False] * len(gts)
    result = MatchResult()
    for pi in order:
        best_gi = -1
        best_iou = 0.0
        for gi, gt in enumerate(gts):
            if taken[gi]:
                continue
            v = iou(preds[pi].bbox, gt)
            if v >= iou_threshold and v > best_iou:
                best_iou = v
                best_gi = gi
        if best_gi >= 0:
            taken[best_gi] = True
            result.pairs.append((pi, best_gi, best_iou))
        else:
            result.unmatched_preds.append(pi)
    result.unmatched_gts = [gi for gi, t in enumerate(taken) if not t]
    return result


def match_hungarian(
    preds: list[ScoredBox], gts: list[BoundingBox], iou_threshold: float = 0.5
) -> MatchResult:
    """Optimal one-to-one matching maximizing total IoU over pairs with
    IoU >= threshold. Sensitivity-check alternative to match_greedy."""
    if not (0 < iou_threshold <= 1):
        raise ValueError("iou_threshold must be in (0, 1]")
    import numpy as np
    from scipy.optimize import linear_sum_assignment

    result = MatchResult()
    if not preds or not gts:
        result.unmatched_preds = list(range(len(preds)))
        result.unmatched_gts = list(range(len(gts)))
        return result
    mat = np.zeros((len(preds), len(gts)))
    for pi, p in enumerate(preds):
        for gi, g in enumerate(gts):
            v = iou(p.bbox, g)
            if v >= iou_threshold:
                mat[pi, gi] = v
    rows, cols = linear_sum_assignment(-mat)
    matched_p, matched_g = set(), set()
    for pi, gi in zip(rows, cols):
        if mat[pi, gi] > 0:
            result.pairs.append((int(pi), int(gi), float(mat[pi, gi])))
            matched_p.add(int(pi))
            matched_g.add(int(gi))
    result.pairs.sort(key=lambda t: (-preds[t[0]].score, t[0]))
    result.unmatched_preds = [i for i in range(len(preds)) if i not in matched_p]
    result.unmatched_gts = [i for i in range(len(gts)) if i not in matched_g]
    return result


@dataclass(frozen=True)
class LabeledBox:
    """A prediction after label imputation: class_id is None for false
    positives (no aligned ground truth)."""

    pred_index: int
    bbox: BoundingBox
    score: float
    class_id: int | None
    gt_index: int | None


def impute_labels(
    match: MatchResult, preds: list[ScoredBox], gts: list[Annotation]
) -> tuple[list[LabeledBox], list[int]]:
    """Carry ground-truth classes onto matched predictions.

    Returns (labeled predictions in input order, missed gt indices). Unmatched
    predictions are flagged false-positive via class_id=None.
    """
    for _, gi, _ in match.pairs:
        if gi >= len(gts):
            raise IndexError(f"match refers to gt index {gi} but only {len(gts)} gts given")
    for pi, _, _ in match.pairs:
        if pi >= len(preds):
            raise IndexError(f"match refers to pred index {pi} but only {len(preds)} preds given")
    gt_of_pred = {pi: gi for pi, gi, _ in match.pairs}
    labeled = []
    for pi, pred in enumerate(preds):
        gi = gt_of_pred.get(pi)
        labeled.append(
            LabeledBox(
                pred_index=pi,
                bbox=pred.bbox,
                score=pred.score,
                class_id=None if gi is None else gts[gi].class_id,
                gt_index=gi,
            )
        )
    return labeled, list(match.unmatched_gts)
