"""Pipeline orchestration: detect -> classify -> line layout ->
reading-ordered suggestions, fold-based evaluation, dataset-size ablations,
and the run manifest that makes runs reproducible."""

from __future__ import annotations

import hashlib
import json
import platform
import shlex
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .backends import (
    BaselineDetector,
    BaselineDetectorParams,
    CentroidClassifier,
    CentroidClassifierModel,
    ClassifierBackend,
    DetectorBackend,
    FixtureClassifier,
    FixtureDetector,
    OracleClassifier,
    load_predictions,
    predictions_from_ground_truth,
    train_centroid_classifier,
)
from .dataset import (
    BoundingBox,
    Dataset,
    FoldAssignment,
    ImageRecord,
    select_fold,
    subsample_training,
)
from .geometry import ScoredBox, centroid, impute_labels, match_greedy
from .images import ImageStore
from .layout import LayoutPoint, LayoutResult, LineConfig, default_residual_threshold, sequential_ransac
from .metrics import (
    ConfusionTally,
    average_precision,
    corpus_cer,
    detector_fpr,
    mean_recall,
    per_class_report,
    recall_at,
    spearman_rho,
    topk_accuracy,
)


@dataclass
class PipelineConfig:
    detector: str = "baseline"
    classifier: str = "centroid"
    score_threshold: float = 0.5
    iou_thresholds: tuple[float, float] = (0.5, 0.75)
    topk: tuple[int, ...] = (1, 3, 5)
    folds: int = 5
    seed: int = 0
    # Layout: residual_threshold None means adaptive per image
    # (0.75 x median hotspot height).
    residual_threshold: float | None = None
    ridge_lambda: float = 10.0
    max_abs_slope: float = 0.3
    ransac_iterations: int = 200
    # CER granularity: whole-image sequences by default; "line" compares
    # per-line sequences instead.
    cer_scope: str = "image"
    baseline_params: BaselineDetectorParams = field(default_factory=BaselineDetectorParams)

    def line_config(self, boxes: list[ScoredBox]) -> LineConfig:
        threshold = self.residual_threshold
        if threshold is None:
            heights = [b.bbox.height for b in boxes]
            threshold = default_residual_threshold(heights) if heights else 1.0
        return LineConfig(
            residual_threshold=threshold,
            ridge_lambda=self.ridge_lambda,
            max_abs_slope=self.max_abs_slope,
            ransac_iterations=self.ransac_iterations,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return {
            "detector": self.detector,
            "classifier": self.classifier,
            "score_threshold": self.score_threshold,
            "iou_thresholds": list(self.iou_thresholds),
            "topk": list(self.topk),
            "folds": self.folds,
            "seed": self.seed,
            "residual_threshold": self.residual_threshold,
            "ridge_lambda": self.ridge_lambda,
            "max_abs_slope": self.max_abs_slope,
            "ransac_iterations": self.ransac_iterations,
            "cer_scope": self.cer_scope,
        }


def build_detector(spec: str, dataset: Dataset, store: ImageStore) -> DetectorBackend:
    """Detector from a backend spec string: "oracle", "baseline",
    "fixture:<predictions.json>", "stdio:<command>", or "http:<url>"."""
    if spec == "oracle":
        return FixtureDetector(predictions_from_ground_truth(dataset, with_class_scores=False))
    if spec == "baseline":
        return BaselineDetector(BaselineDetectorParams(), store)
    if spec.startswith("fixture:"):
        return FixtureDetector(load_predictions(spec.split(":", 1)[1]))
    if spec.startswith("stdio:"):
        from .protocol import RemoteDetector, StreamBackendClient

        return RemoteDetector(StreamBackendClient(shlex.split(spec.split(":", 1)[1])), store)
    if spec.startswith("http:") or spec.startswith("https:"):
        from .protocol import HttpBackendClient, RemoteDetector

        return RemoteDetector(HttpBackendClient(spec), store)
    raise ValueError(f"unknown detector spec {spec!r}")


def build_classifier(spec: str, dataset: Dataset, store: ImageStore) -> ClassifierBackend:
    """Classifier from a backend spec string: "oracle", "centroid:<model.npz>",
    "fixture:<predictions.json>", "stdio:<command>", or "http:<url>".
    The bare "centroid" spec is trained in-run by the evaluation harness."""
    class_ids = sorted(c.class_id for c in dataset.catalog)
    if spec == "oracle":
        return OracleClassifier(dataset)
    if spec.startswith("centroid:"):
        return CentroidClassifier(CentroidClassifierModel.load(spec.split(":", 1)[1]), store)
    if spec.startswith("fixture:"):
        return FixtureClassifier(load_predictions(spec.split(":", 1)[1]), class_ids)
    if spec.startswith("stdio:"):
        from .protocol import RemoteClassifier, StreamBackendClient

        return RemoteClassifier(StreamBackendClient(shlex.split(spec.split(":", 1)[1])), store, class_ids)
    if spec.startswith("http:") or spec.startswith("https:"):
        from .protocol import HttpBackendClient, RemoteClassifier

        return RemoteClassifier(HttpBackendClient(spec), store, class_ids)
    raise ValueError(f"unknown classifier spec {spec!r}")


# ---------------------------------------------------------------------------
# Transliteration

@dataclass
class TransliterationItem:
    bbox: BoundingBox
    score: float
    suggestions: list[tuple[int, float]]  # (class_id, score), best first


@dataclass
class TransliterationResult:
    image_id: str
    items: list[TransliterationItem]  # reading order
    top1_sequence: list[int]
    layout: LayoutResult | None

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "items": [
                {
                    "bbox": it.bbox.as_list(),
                    "score": it.score,
                    "suggestions": [[c, s] for c, s in it.suggestions],
                }
                for it in self.items
            ],
            "top1_sequence": list(self.top1_sequence),
            "lines": None
            if self.layout is None
            else [
                {"slope": ln.slope, "intercept": ln.intercept, "members": list(ln.members)}
                for ln in self.layout.lines
            ],
        }


def run_transliterate(
    record: ImageRecord,
    detector: DetectorBackend,
    classifier: ClassifierBackend,
    config: PipelineConfig,
) -> TransliterationResult:
    """Full pipeline on one image: detect, drop low-score boxes, classify
    each crop, reconstruct lines from box centroids, and emit reading-ordered
    ranked suggestions."""
    try:
        detections = detector.detect(record)
    except Exception as exc:
        raise RuntimeError(f"detect stage failed on {record.image_id!r}: {exc}") from exc
    kept = [b for b in detections.boxes if b.score >= config.score_threshold]
    if not kept:
        return TransliterationResult(record.image_id, [], [], None)

    k_max = max(config.topk)
    scored: list[tuple[ScoredBox, list[tuple[int, float]]]] = []
    for box in kept:
        try:
            vec = classifier.classify(record, box.bbox)
        except Exception as exc:
            raise RuntimeError(f"classify stage failed on {record.image_id!r}: {exc}") from exc
        ranked = vec.ranking()[:k_max]
        by_id = dict(zip(vec.class_ids, vec.scores))
        scored.append((box, [(c, float(by_id[c])) for c in ranked]))

    points = [
        LayoutPoint(point_id=str(i), x=centroid(b.bbox)[0], y=centroid(b.bbox)[1])
        for i, (b, _) in enumerate(scored)
    ]
    layout = sequential_ransac(points, config.line_config(kept))

    items = [
        TransliterationItem(bbox=scored[int(pid)][0].bbox, score=scored[int(pid)][0].score,
                            suggestions=scored[int(pid)][1])
        for pid in layout.reading_sequence
    ]
    top1 = [it.suggestions[0][0] for it in items]
    return TransliterationResult(record.image_id, items, top1, layout)


def reference_sequence(record: ImageRecord) -> list[int]:
    """Ground-truth reading sequence: the stored annotation order."""
    return [a.class_id for a in record.annotations]


def _per_line_sequences(result: TransliterationResult) -> list[list[int]]:
    if result.layout is None:
        return []
    id_to_top1 = {
        pid: result.top1_sequence[i] for i, pid in enumerate(result.layout.reading_sequence)
    }
    return [[id_to_top1[pid] for pid in line.members] for line in result.layout.lines]


def _reference_line_sequences(record: ImageRecord, config: PipelineConfig) -> list[list[int]]:
    """Reference split into lines by running the layout on ground-truth
    centroids (the stored order has no line markers)."""
    points = [
        LayoutPoint(point_id=str(i), x=centroid(a.bbox)[0], y=centroid(a.bbox)[1])
        for i, a in enumerate(record.annotations)
    ]
    if not points:
        return []
    boxes = [ScoredBox(bbox=a.bbox, score=1.0) for a in record.annotations]
    layout = sequential_ransac(points, config.line_config(boxes))
    return [[record.annotations[int(pid)].class_id for pid in ln.members] for ln in layout.lines]


# ---------------------------------------------------------------------------
# Evaluation

@dataclass
class EvalReport:
    fold: int | None
    ap50: float
    ap75: float
    recall50: float
    recall75: float
    top1: float
    top3: float
    top5: float
    mean_recall: float
    spearman_precision: float | None
    spearman_recall: float | None
    pred_top1: float
    pred_top3: float
    pred_top5: float
    detector_fpr: float
    cer: float
    cer_macro_tablet: float
    per_class: list[dict]

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "ap50": self.ap50,
            "ap75": self.ap75,
            "recall50": self.recall50,
            "recall75": self.recall75,
            "top1": self.top1,
            "top3": self.top3,
            "top5": self.top5,
            "mean_recall": self.mean_recall,
            "spearman_precision": self.spearman_precision,
            "spearman_recall": self.spearman_recall,
            "pred_top1": self.pred_top1,
            "pred_top3": self.pred_top3,
            "pred_top5": self.pred_top5,
            "detector_fpr": self.detector_fpr,
            "cer": self.cer,
            "cer_macro_tablet": self.cer_macro_tablet,
            "per_class": self.per_class,
        }


def _train_counts(train: Dataset) -> dict[int, int]:
    counts: dict[int, int] = {}
    for img in train.images:
        for ann in img.annotations:
            counts[ann.class_id] = counts.get(ann.class_id, 0) + 1
    return counts


def _safe_spearman(x: list[float], y: list[float]) -> float | None:
    try:
        return spearman_rho(x, y)
    except ValueError:
        return None


def evaluate_split(
    train: Dataset,
    test: Dataset,
    store: ImageStore,
    config: PipelineConfig,
    fold: int | None = None,
    impute_iou: float = 0.5,
) -> EvalReport:
    """All metric families on one train/test split: detection AP/recall,
    classification on ground-truth crops, classification on predicted crops
    with imputed labels, detector FPR, and end-to-end CER."""
    detector = build_detector(config.detector, test, store)
    if config.classifier == "centroid":
        classifier: ClassifierBackend = CentroidClassifier(
            train_centroid_classifier(train, store), store
        )
    else:
        classifier = build_classifier(config.classifier, test, store)

    preds_by_image: list[list[ScoredBox]] = []
    gts_by_image: list[list[BoundingBox]] = []
    tablet_ids: list[str] = []
    detections_cache: dict[str, list[ScoredBox]] = {}
    for record in test.images:
        boxes = detector.detect(record).boxes
        detections_cache[record.image_id] = boxes
        preds_by_image.append(boxes)
        gts_by_image.append([a.bbox for a in record.annotations])
        tablet_ids.append(record.tablet_id)

    iou_lo, iou_hi = config.iou_thresholds
    ap50 = average_precision(preds_by_image, gts_by_image, iou_lo).ap
    ap75 = average_precision(preds_by_image, gts_by_image, iou_hi).ap
    recall50 = recall_at(preds_by_image, gts_by_image, tablet_ids, iou_lo, config.score_threshold)
    recall75 = recall_at(preds_by_image, gts_by_image, tablet_ids, iou_hi, config.score_threshold)

    # Classification on ground-truth crops (upper-bound discipline).
    class_ids = sorted(c.class_id for c in test.catalog)
    tally = ConfusionTally.empty(class_ids)
    tally.train_count = _train_counts(train)
    rankings: list[list[int]] = []
    labels: list[int] = []
    for record in test.images:
        for ann in record.annotations:
            ranking = classifier.classify(record, ann.bbox).ranking()
            rankings.append(ranking)
            labels.append(ann.class_id)
            tally.add(ann.class_id, ranking[0])
    ks = sorted(config.topk)
    gt_top = {k: topk_accuracy(rankings, labels, k) for k in ks}
    rows = per_class_report(tally)
    sp_prec = _safe_spearman(
        *zip(*[(r.train_count, r.precision) for r in rows if r.support > 0 and r.precision is not None])
    ) if any(r.support > 0 and r.precision is not None for r in rows) else None
    sp_rec = _safe_spearman(
        *zip(*[(r.train_count, r.recall) for r in rows if r.support > 0])
    ) if any(r.support > 0 for r in rows) else None

    # Classification on predicted crops with labels imputed from gt alignment.
    pred_rankings: list[list[int]] = []
    pred_labels: list[int] = []
    matches = []
    kept_by_image: list[list[ScoredBox]] = []
    cer_pairs: list[tuple[list[int], list[int]]] = []
    tablet_pairs: dict[str, list[tuple[list[int], list[int]]]] = {}
    for record in test.images:
        boxes = detections_cache[record.image_id]
        kept = [b for b in boxes if b.score >= config.score_threshold]
        match = match_greedy(kept, [a.bbox for a in record.annotations], impute_iou)
        matches.append(match)
        kept_by_image.append(kept)
        labeled, _missed = impute_labels(match, kept, list(record.annotations))
        for lb in labeled:
            if lb.class_id is None:
                continue
            ranking = classifier.classify(record, lb.bbox).ranking()
            pred_rankings.append(ranking)
            pred_labels.append(lb.class_id)

        result = _transliterate_with_detections(record, kept, classifier, config)
        if config.cer_scope == "line":
            hyp_lines = _per_line_sequences(result)
            ref_lines = _reference_line_sequences(record, config)
            pairs = [
                (hyp_lines[i] if i < len(hyp_lines) else [],
                 ref_lines[i] if i < len(ref_lines) else [])
                for i in range(max(len(hyp_lines), len(ref_lines)))
            ]
        else:
            pairs = [(result.top1_sequence, reference_sequence(record))]
        cer_pairs.extend(pairs)
        tablet_pairs.setdefault(record.tablet_id, []).extend(pairs)

    pred_top = {
        k: topk_accuracy(pred_rankings, pred_labels, k) if pred_rankings else 0.0 for k in ks
    }
    fpr = detector_fpr(matches, kept_by_image, config.score_threshold)
    cer_micro = corpus_cer(cer_pairs)
    per_tablet = [corpus_cer(pairs) for pairs in tablet_pairs.values()]
    cer_macro = float(np.mean(per_tablet)) if per_tablet else 0.0

    return EvalReport(
        fold=fold,
        ap50=ap50,
        ap75=ap75,
        recall50=recall50,
        recall75=recall75,
        top1=gt_top.get(1, 0.0),
        top3=gt_top.get(3, 0.0),
        top5=gt_top.get(5, 0.0),
        mean_recall=mean_recall(tally),
        spearman_precision=sp_prec,
        spearman_recall=sp_rec,
        pred_top1=pred_top.get(1, 0.0),
        pred_top3=pred_top.get(3, 0.0),
        pred_top5=pred_top.get(5, 0.0),
        detector_fpr=fpr,
        cer=cer_micro,
        cer_macro_tablet=cer_macro,
        per_class=[
            {
                "class_id": r.class_id,
                "train_count": r.train_count,
                "precision": r.precision,
                "recall": r.recall,
                "support": r.support,
            }
            for r in rows
        ],
    )


def _transliterate_with_detections(
    record: ImageRecord,
    kept: list[ScoredBox],
    classifier: ClassifierBackend,
    config: PipelineConfig,
) -> TransliterationResult:
    class _Fixed:
        def detect(self, rec):
            from .backends import DetectionSet

            return DetectionSet(image_id=rec.image_id, boxes=kept)

    return run_transliterate(record, _Fixed(), classifier, config)


def run_evaluate(
    dataset: Dataset,
    store: ImageStore,
    folds: FoldAssignment,
    config: PipelineConfig,
) -> dict:
    """Per-fold evaluation plus a mean (sample std) aggregate across folds,
    as a JSON-ready dict."""
    missing = [t for t in dataset.tablet_ids() if t not in folds.tablet_to_fold]
    if missing:
        raise ValueError(f"fold assignment does not cover tablets: {missing[:5]}")
    reports = []
    for fold in range(folds.k):
        train = select_fold(dataset, folds, fold, train=True)
        test = select_fold(dataset, folds, fold, train=False)
        reports.append(evaluate_split(train, test, store, config, fold=fold))

    numeric = [
        "ap50", "ap75", "recall50", "recall75",
        "top1", "top3", "top5", "mean_recall",
        "pred_top1", "pred_top3", "pred_top5",
        "detector_fpr", "cer", "cer_macro_tablet",
    ]
    aggregate = {}
    for name in numeric:
        values = [getattr(r, name) for r in reports]
        mean = float(np.mean(values))
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        aggregate[name] = {"mean": mean, "std": std, "formatted": f"{mean:.3f} ({std:.3f})"}
    return {
        "folds": [r.to_dict() for r in reports],
        "aggregate": aggregate,
    }


# ---------------------------------------------------------------------------
# Dataset-size ablation

def _split_train_test_by_image(dataset: Dataset, seed: int, test_frac: float = 0.25):
    ids = sorted(img.image_id for img in dataset.images)
    import random as _random

    rng = _random.Random(seed)
    rng.shuffle(ids)
    n_test = max(1, round(test_frac * len(ids)))
    test_ids = set(ids[:n_test])
    train = Dataset(catalog=list(dataset.catalog),
                    images=[i for i in dataset.images if i.image_id not in test_ids])
    test = Dataset(catalog=list(dataset.catalog),
                   images=[i for i in dataset.images if i.image_id in test_ids])
    return train, test


def ablation_point(
    train: Dataset,
    test: Dataset,
    store: ImageStore,
    config: PipelineConfig,
    fraction: float,
    sample_seed: int,
) -> dict:
    """Retrain the trainable backend on a subsample of the training images
    and score the fixed test split. Subsampling at fraction 1.0 is the
    identity, so this reproduces the non-ablated run exactly."""
    sub = subsample_training(train, fraction, seed=sample_seed, unit="image")
    report = evaluate_split(sub, test, store, config)
    return {
        "fraction": fraction,
        "sample_seed": sample_seed,
        "top1": report.top1,
        "top5": report.top5,
        "mean_recall": report.mean_recall,
        "ap50": report.ap50,
        "cer": report.cer,
    }


def run_ablation(
    dataset: Dataset,
    store: ImageStore,
    fractions: list[float],
    repeats: int,
    config: PipelineConfig,
    metric: str = "top1",
) -> dict:
    """Training-set-size ablation on a fixed train/test split: for each
    fraction x repeat, resample the training images, retrain, evaluate."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    for f in fractions:
        if not (0 < f <= 1):
            raise ValueError("fractions must lie in (0, 1]")
    train, test = _split_train_test_by_image(dataset, config.seed)
    curve = []
    for fi, fraction in enumerate(sorted(fractions)):
        values = []
        points = []
        for rep in range(repeats):
            sample_seed = config.seed * 1_000_003 + fi * 1_009 + rep
            point = ablation_point(train, test, store, config, fraction, sample_seed)
            points.append(point)
            values.append(point[metric])
        mean = float(np.mean(values))
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        curve.append(
            {"fraction": fraction, "metric": metric, "mean": mean, "std": std, "points": points}
        )
    return {"metric": metric, "repeats": repeats, "curve": curve}


# ---------------------------------------------------------------------------
# Run manifest

def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    out_dir: Path | str,
    command: str,
    config: dict,
    inputs: list[str | Path],
    seed: int | None,
) -> Path:
    """RunManifest JSON beside the outputs: config snapshot, input hashes,
    seeds, component versions, timestamp."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "input_hashes": {str(p): sha256_file(p) for p in inputs if Path(p).is_file()},
        "versions": {
            "signpipe": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    path = out / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def canonical_json(obj) -> str:
    """Stable serialization for byte-identical report comparisons."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
