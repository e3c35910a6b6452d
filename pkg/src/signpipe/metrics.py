"""Detection and classification metrics: average precision, per-tablet
recall, top-k accuracy, mean recall, Spearman rank correlation, Levenshtein
edit distance / character error rate, detector false-positive rate, and
per-class precision/recall reports."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as scipy_stats

from .dataset import BoundingBox
from .geometry import MatchResult, ScoredBox, match_greedy


@dataclass
class PRCurve:
    """(recall, precision) points in prediction-score order plus the
    interpolated average precision."""

    points: list[tuple[float, float]]
    ap: float


@dataclass
class ConfusionTally:
    """Square count matrix, rows = true class, columns = predicted top-1
    class, indexed by position in class_ids."""

    class_ids: list[int]
    matrix: np.ndarray
    train_count: dict[int, int] = field(default_factory=dict)

    @classmethod
    def empty(cls, class_ids: Sequence[int]) -> "ConfusionTally":
        n = len(class_ids)
        return cls(list(class_ids), np.zeros((n, n), dtype=int))

    def add(self, true_class: int, predicted_class: int) -> None:
        idx = {c: i for i, c in enumerate(self.class_ids)}
        self.matrix[idx[true_class], idx[predicted_class]] += 1

    def add_many(self, pairs: Sequence[tuple[int, int]]) -> None:
        idx = {c: i for i, c in enumerate(self.class_ids)}
        for t, p in pairs:
            self.matrix[idx[t], idx[p]] += 1


@dataclass
class PerClassRow:
    class_id: int
    train_count: int
    precision: float | None  # None when the class was never predicted
    recall: float
    support: int


def average_precision(
    preds_by_image: Sequence[Sequence[ScoredBox]],
    gts_by_image: Sequence[Sequence[BoundingBox]],
    iou_threshold: float = 0.5,
    interpolation: str = "101point",
) -> PRCurve:
    """Average precision over a pooled, score-ranked prediction list.

    Predictions are matched greedily within each image at the IoU threshold;
    the ranked sweep breaks score ties by image order then input index. AP is
    the 101-point interpolated area by default ("allpoint" integrates the
    interpolated curve exactly).
    """
    if len(preds_by_image) != len(gts_by_image):
        raise ValueError("preds and gts must cover the same images")
    total_gts = sum(len(g) for g in gts_by_image)
    if total_gts == 0:
        raise ValueError("average precision undefined with no ground-truth boxes")

    ranked: list[tuple[float, int, int, bool]] = []  # score, image idx, pred idx, is_tp
    for img_idx, (preds, gts) in enumerate(zip(preds_by_image, gts_by_image)):
        match = match_greedy(list(preds), list(gts), iou_threshold)
        tp_idx = {pi for pi, _, _ in match.pairs}
        for pi, p in enumerate(preds):
            ranked.append((p.score, img_idx, pi, pi in tp_idx))
    ranked.sort(key=lambda t: (-t[0], t[1], t[2]))

    points: list[tuple[float, float]] = []
    tp = 0
    for n, (_, _, _, is_tp) in enumerate(ranked, start=1):
        tp += int(is_tp)
        points.append((tp / total_gts, tp / n))

    return PRCurve(points, _interpolated_ap(points, interpolation))


def _interpolated_ap(points: list[tuple[float, float]], interpolation: str) -> float:
    if not points:
        return 0.0
    recalls = np.array([r for r, _ in points])
    precisions = np.array([p for _, p in points])
    # Monotone envelope: precision at recall r = max precision at recall >= r.
    envelope = np.maximum.accumulate(precisions[::-1])[::-1]
    if interpolation == "101point":
        total = 0.0
        for r in np.linspace(0.0, 1.0, 101):
            at_least = envelope[recalls >= r - 1e-12]
            total += float(at_least[0]) if at_least.size else 0.0
        return total / 101.0
    if interpolation == "allpoint":
        ap = 0.0
        prev_r = 0.0
        for r, p in zip(recalls, envelope):
            ap += (r - prev_r) * p
            prev_r = r
        return float(ap)
    raise ValueError(f"unknown interpolation {interpolation!r}")


def recall_at(
    preds_by_image: Sequence[Sequence[ScoredBox]],
    gts_by_image: Sequence[Sequence[BoundingBox]],
    tablet_ids: Sequence[str],
    iou_threshold: float = 0.5,
    score_threshold: float = 0.5,
) -> float:
    """Unweighted mean over tablets (with >= 1 gt) of the tablet's matched-gt
    fraction, using only predictions with score >= score_threshold."""
    if not (len(preds_by_image) == len(gts_by_image) == len(tablet_ids)):
        raise ValueError("preds, gts and tablet_ids must align")
    matched: dict[str, int] = {}
    total: dict[str, int] = {}
    for preds, gts, tablet in zip(preds_by_image, gts_by_image, tablet_ids):
        kept = [p for p in preds if p.score >= score_threshold]
        match = match_greedy(kept, list(gts), iou_threshold)
        matched[tablet] = matched.get(tablet, 0) + len(match.pairs)
        total[tablet] = total.get(tablet, 0) + len(gts)
    recalls = [matched[t] / total[t] for t in total if total[t] > 0]
    if not recalls:
        raise ValueError("no tablets with ground-truth boxes")
    return float(np.mean(recalls))


def topk_accuracy(
    rankings: Sequence[Sequence[int]], labels: Sequence[int], k: int
) -> float:
    """Fraction of samples whose label appears among the first k ranked
    classes."""
    if len(rankings) != len(labels) or not rankings:
        raise ValueError("need equal, nonempty rankings and labels")
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = sum(1 for ranking, label in zip(rankings, labels) if label in list(ranking)[:k])
    return hits / len(labels)


def mean_recall(tally: ConfusionTally) -> float:
    """Balanced accuracy: unweighted mean of per-class recall over classes
    with nonzero support."""
    row_sums = tally.matrix.sum(axis=1)
    diag = np.diag(tally.matrix)
    mask = row_sums > 0
    if not mask.any():
        raise ValueError("mean recall undefined: all classes have zero support")
    return float(np.mean(diag[mask] / row_sums[mask]))


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation: Pearson correlation of average-rank
    transformed values (ties share the average rank)."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if len(xa) != len(ya) or len(xa) < 2:
        raise ValueError("need two equal-length vectors of at least 2 values")
    if np.all(xa == xa[0]) or np.all(ya == ya[0]):
        raise ValueError("spearman correlation undefined for a constant vector")
    return float(scipy_stats.spearmanr(xa, ya).statistic)


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance with unit-cost insertions, deletions and
    substitutions, by dynamic programming over token sequences."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ta in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, tb in enumerate(b, start=1):
            cost = 0 if ta == tb else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[-1]


def cer(hypothesis: Sequence, reference: Sequence) -> float:
    """Edit distance normalized by reference length (empty references use a
    length floor of 1)."""
    return edit_distance(hypothesis, reference) / max(1, len(reference))


def corpus_cer(pairs: Sequence[tuple[Sequence, Sequence]]) -> float:
    """Micro-averaged corpus CER: total edit distance over total reference
    length across (hypothesis, reference) pairs."""
    total_dist = sum(edit_distance(h, r) for h, r in pairs)
    total_len = sum(len(r) for _, r in pairs)
    return total_dist / max(1, total_len)


def detector_fpr(
    matches: Sequence[MatchResult],
    preds_by_image: Sequence[Sequence[ScoredBox]],
    score_threshold: float = 0.5,
) -> float:
    """Fraction of above-threshold predictions left unmatched, pooled over
    images; 0/0 is defined as 0."""
    if len(matches) != len(preds_by_image):
        raise ValueError("matches and preds must align")
    false_pos = 0
    total = 0
    for match, preds in zip(matches, preds_by_image):
        unmatched = set(match.unmatched_preds)
        for pi, p in enumerate(preds):
            if p.score >= score_threshold:
                total += 1
                if pi in unmatched:
                    false_pos += 1
    return false_pos / total if total else 0.0


def per_class_report(tally: ConfusionTally) -> list[PerClassRow]:
    """Per-class precision/recall/support rows; precision is None for classes
    never predicted, recall is 0 for classes with zero support."""
    col_sums = tally.matrix.sum(axis=0)
    row_sums = tally.matrix.sum(axis=1)
    diag = np.diag(tally.matrix)
    rows = []
    for i, class_id in enumerate(tally.class_ids):
        precision = None if col_sums[i] == 0 else float(diag[i] / col_sums[i])
        recall = 0.0 if row_sums[i] == 0 else float(diag[i] / row_sums[i])
        rows.append(
            PerClassRow(
                class_id=class_id,
                train_count=tally.train_count.get(class_id, 0),
                precision=precision,
                recall=recall,
                support=int(row_sums[i]),
            )
        )
    return rows


def frequency_recall_points(rows: Sequence[PerClassRow]) -> list[tuple[float, float]]:
    """(ln train_count, recall) pairs for the frequency-vs-performance
    scatter; classes without training examples or support are skipped."""
    return [
        (float(np.log(r.train_count)), r.recall)
        for r in rows
        if r.train_count > 0 and r.support > 0
    ]
