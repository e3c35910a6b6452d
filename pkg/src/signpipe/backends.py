"""Detection and classification backends: the pluggable contracts, 50x50
crop preprocessing, a classical baseline (adaptive binarization + connected
components; nearest-mean-template classifier), and fixture/oracle backends
that replay stored or ground-truth predictions."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from PIL import Image
from scipy import ndimage

from .dataset import Annotation, BoundingBox, Dataset, ImageRecord
from .geometry import ScoredBox, iou
from .images import ImageStore, crop_pixels


class BackendError(Exception):
    """Backend could not answer a request."""


@dataclass
class DetectionSet:
    image_id: str
    boxes: list[ScoredBox] = field(default_factory=list)


@dataclass
class ScoreVector:
    """Unnormalized per-class scores; scores[i] belongs to class_ids[i]."""

    class_ids: list[int]
    scores: np.ndarray

    def ranking(self) -> list[int]:
        """Class ids by descending score, ties by ascending class_id."""
        order = sorted(range(len(self.class_ids)), key=lambda i: (-self.scores[i], self.class_ids[i]))
        return [self.class_ids[i] for i in order]

    def top1(self) -> int:
        return self.ranking()[0]


class DetectorBackend(Protocol):
    def detect(self, record: ImageRecord) -> DetectionSet: ...


class ClassifierBackend(Protocol):
    def classify(self, record: ImageRecord, box: BoundingBox) -> ScoreVector: ...


# ---------------------------------------------------------------------------
# Crop preprocessing

def preprocess_crop(pixels: np.ndarray, box: BoundingBox, side: int = 50) -> np.ndarray:
    """Normalized classifier input patch for one hotspot.

    The crop is resized preserving aspect ratio so its longer side equals
    `side`, centered on a side x side canvas padded with the crop's mean
    intensity, then standardized to zero mean and unit variance (an exactly
    constant patch becomes all zeros).
    """
    crop = crop_pixels(pixels, box).astype(np.float32)
    h, w = crop.shape
    scale = side / max(h, w)
    new_w = max(1, round(w * scale))
    new_h = max(1, round(h * scale))
    resized = np.asarray(
        Image.fromarray(crop, mode="F").resize((new_w, new_h), Image.BILINEAR)
    )
    canvas = np.full((side, side), float(crop.mean()), dtype=np.float32)
    oy = (side - new_h) // 2
    ox = (side - new_w) // 2
    canvas[oy : oy + new_h, ox : ox + new_w] = resized
    std = canvas.std()
    if std == 0.0:
        return np.zeros((side, side), dtype=np.float32)
    return (canvas - canvas.mean()) / std


# ---------------------------------------------------------------------------
# Classical baseline detector

@dataclass
class BaselineDetectorParams:
    # Window well above sign size keeps the local mean close to the
    # background; the offset sits far outside background-noise range.
    binarization_window: int = 61
    threshold_offset: float = 30.0
    dilation_radius: int = 2
    min_area: float = 40.0
    max_area: float = 2500.0

    def __post_init__(self):
        if self.binarization_window < 3 or self.dilation_radius < 0:
            raise ValueError("invalid binarization/dilation parameters")
        if not (0 < self.min_area < self.max_area):
            raise ValueError("need 0 < min_area < max_area")


def baseline_detect(pixels: np.ndarray, params: BaselineDetectorParams) -> list[ScoredBox]:
    """Dark-ink blob detector: local-mean binarization, dilation to merge
    strokes, connected components, component-area filtering. Box extents are
    shrunk back by the dilation radius; score = area / max_area clamped."""
    img = pixels.astype(np.float32)
    local_mean = ndimage.uniform_filter(img, size=params.binarization_window, mode="reflect")
    mask = img < (local_mean - params.threshold_offset)
    if params.dilation_radius > 0:
        mask = ndimage.binary_dilation(mask, iterations=params.dilation_radius)
    labels, n = ndimage.label(mask)
    if n == 0:
        return []
    areas = np.bincount(labels.ravel())
    h, w = img.shape
    r = params.dilation_radius
    boxes = []
    for comp, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        area = float(areas[comp])
        if not (params.min_area <= area <= params.max_area):
            continue
        y0, y1 = sl[0].start + r, sl[0].stop - r
        x0, x1 = sl[1].start + r, sl[1].stop - r
        if x1 - x0 < 1:  # undo-dilation collapsed the box; keep a 1px core
            cx = (sl[1].start + sl[1].stop) / 2
            x0, x1 = cx - 0.5, cx + 0.5
        if y1 - y0 < 1:
            cy = (sl[0].start + sl[0].stop) / 2
            y0, y1 = cy - 0.5, cy + 0.5
        box = BoundingBox(
            max(0.0, float(x0)), max(0.0, float(y0)), min(float(w), float(x1)), min(float(h), float(y1))
        )
        score = min(1.0, area / params.max_area)
        boxes.append(ScoredBox(bbox=box, score=score, source_id=f"cc{comp}"))
    boxes.sort(key=lambda b: (b.bbox.y_min, b.bbox.x_min))
    return boxes


class BaselineDetector:
    def __init__(self, params: BaselineDetectorParams, store: ImageStore):
        self.params = params
        self.store = store

    def detect(self, record: ImageRecord) -> DetectionSet:
        pixels = self.store.pixels(record)
        return DetectionSet(image_id=record.image_id, boxes=baseline_detect(pixels, self.params))


# ---------------------------------------------------------------------------
# Nearest-mean-template classifier

@dataclass
class CentroidClassifierModel:
    class_ids: list[int]  # full catalog, ascending
    templates: dict[int, np.ndarray]  # unit-normalized side x side patches
    side: int = 50

    def save(self, path) -> None:
        modeled = sorted(self.templates)
        np.savez(
            path,
            class_ids=np.array(self.class_ids, dtype=np.int64),
            modeled=np.array(modeled, dtype=np.int64),
            templates=np.stack([self.templates[c] for c in modeled])
            if modeled
            else np.zeros((0, self.side, self.side), dtype=np.float32),
            side=np.array(self.side),
        )

    @classmethod
    def load(cls, path) -> "CentroidClassifierModel":
        data = np.load(path)
        modeled = [int(c) for c in data["modeled"]]
        stack = data["templates"]
        return cls(
            class_ids=[int(c) for c in data["class_ids"]],
            templates={c: stack[i] for i, c in enumerate(modeled)},
            side=int(data["side"]),
        )


def train_centroid_classifier(
    dataset: Dataset, store: ImageStore, side: int = 50
) -> CentroidClassifierModel:
    """Per-class mean of preprocessed crops, unit-normalized. Classes with no
    training crops are excluded (with a warning) and rank last at inference."""
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for record in dataset.images:
        pixels = store.pixels(record)
        for ann in record.annotations:
            patch = preprocess_crop(pixels, ann.bbox, side)
            if ann.class_id in sums:
                sums[ann.class_id] += patch
                counts[ann.class_id] += 1
            else:
                sums[ann.class_id] = patch.copy()
                counts[ann.class_id] = 1
    templates = {}
    for class_id, total in sums.items():
        mean = total / counts[class_id]
        norm = float(np.linalg.norm(mean))
        templates[class_id] = (mean / norm if norm > 0 else mean).astype(np.float32)
    class_ids = sorted(c.class_id for c in dataset.catalog)
    missing = [c for c in class_ids if c not in templates]
    if missing:
        warnings.warn(f"no training crops for {len(missing)} classes: {missing[:8]}")
    return CentroidClassifierModel(class_ids=class_ids, templates=templates, side=side)


class CentroidClassifier:
    """Scores a crop by cosine similarity against each class template."""

    # Below any reachable cosine; keeps unmodeled classes ranked last.
    UNMODELED_SCORE = -2.0

    def __init__(self, model: CentroidClassifierModel, store: ImageStore):
        self.model = model
        self.store = store

    def classify(self, record: ImageRecord, box: BoundingBox) -> ScoreVector:
        pixels = self.store.pixels(record)
        patch = preprocess_crop(pixels, box, self.model.side).ravel()
        norm = float(np.linalg.norm(patch))
        unit = patch / norm if norm > 0 else patch
        scores = np.full(len(self.model.class_ids), self.UNMODELED_SCORE, dtype=np.float64)
        for i, class_id in enumerate(self.model.class_ids):
            template = self.model.templates.get(class_id)
            if template is not None:
                scores[i] = float(template.ravel() @ unit)
        return ScoreVector(class_ids=list(self.model.class_ids), scores=scores)


# ---------------------------------------------------------------------------
# Predictions schema and fixture backends.  Schema (one UTF-8 JSON document):
#   {"images": [{"image_id": str,
#                "boxes": [{"bbox": [x0, y0, x1, y1], "score": float,
#                           "class_scores": [float x C]  (optional)}]}]}

@dataclass
class PredictedBox:
    bbox: BoundingBox
    score: float
    class_scores: list[float] | None = None


@dataclass
class Predictions:
    images: dict[str, list[PredictedBox]]  # image_id -> boxes, order preserved

    def to_dict(self) -> dict:
        return {
            "images": [
                {
                    "image_id": image_id,
                    "boxes": [
                        {
                            "bbox": b.bbox.as_list(),
                            "score": b.score,
                            **(
                                {"class_scores": list(b.class_scores)}
                                if b.class_scores is not None
                                else {}
                            ),
                        }
                        for b in boxes
                    ],
                }
                for image_id, boxes in self.images.items()
            ]
        }


def load_predictions(path) -> Predictions:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return predictions_from_dict(doc)


def predictions_from_dict(doc: dict) -> Predictions:
    try:
        images = {}
        for rec in doc["images"]:
            boxes = []
            for b in rec["boxes"]:
                scores = b.get("class_scores")
                boxes.append(
                    PredictedBox(
                        bbox=BoundingBox(*(float(v) for v in b["bbox"])),
                        score=float(b["score"]),
                        class_scores=None if scores is None else [float(s) for s in scores],
                    )
                )
            images[str(rec["image_id"])] = boxes
    except (KeyError, TypeError, ValueError) as exc:
        raise BackendError(f"predictions document does not match schema: {exc}") from exc
    return Predictions(images=images)


def save_predictions(preds: Predictions, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(preds.to_dict(), fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def predictions_from_ground_truth(
    dataset: Dataset, score: float = 1.0, with_class_scores: bool = True
) -> Predictions:
    """Ground truth replayed as predictions: every hotspot box at the given
    score, optionally with a one-hot class score vector."""
    class_ids = sorted(c.class_id for c in dataset.catalog)
    index = {c: i for i, c in enumerate(class_ids)}
    images = {}
    for record in dataset.images:
        boxes = []
        for ann in record.annotations:
            class_scores = None
            if with_class_scores:
                vec = [0.0] * len(class_ids)
                vec[index[ann.class_id]] = 1.0
                class_scores = vec
            boxes.append(PredictedBox(bbox=ann.bbox, score=score, class_scores=class_scores))
        images[record.image_id] = boxes
    return Predictions(images=images)


class FixtureDetector:
    """Replays stored detections keyed by image_id."""

    def __init__(self, predictions: Predictions):
        self.predictions = predictions

    def detect(self, record: ImageRecord) -> DetectionSet:
        if record.image_id not in self.predictions.images:
            raise BackendError(f"no stored predictions for image {record.image_id!r}")
        boxes = [
            ScoredBox(bbox=b.bbox, score=b.score, source_id=f"{record.image_id}/{i}")
            for i, b in enumerate(self.predictions.images[record.image_id])
        ]
        return DetectionSet(image_id=record.image_id, boxes=boxes)


class FixtureClassifier:
    """Replays stored class scores for the stored box nearest (by IoU) to the
    queried box."""

    def __init__(self, predictions: Predictions, class_ids: list[int]):
        self.predictions = predictions
        self.class_ids = list(class_ids)

    def classify(self, record: ImageRecord, box: BoundingBox) -> ScoreVector:
        if record.image_id not in self.predictions.images:
            raise BackendError(f"no stored predictions for image {record.image_id!r}")
        stored = self.predictions.images[record.image_id]
        candidates = [b for b in stored if b.class_scores is not None]
        if not candidates:
            raise BackendError(f"no stored class scores for image {record.image_id!r}")
        best = max(candidates, key=lambda b: iou(b.bbox, box))
        return ScoreVector(
            class_ids=list(self.class_ids), scores=np.array(best.class_scores, dtype=float)
        )


def load_fixture_predictions(
    path, class_ids: list[int]
) -> tuple[FixtureDetector, FixtureClassifier]:
    preds = load_predictions(path)
    return FixtureDetector(preds), FixtureClassifier(preds, class_ids)


class OracleClassifier:
    """Scores from ground truth: one-hot at the class of the gt annotation
    overlapping the queried box most."""

    def __init__(self, dataset: Dataset):
        self.class_ids = sorted(c.class_id for c in dataset.catalog)
        self._index = {c: i for i, c in enumerate(self.class_ids)}
        self._anns: dict[str, list[Annotation]] = {
            img.image_id: list(img.annotations) for img in dataset.images
        }

    def classify(self, record: ImageRecord, box: BoundingBox) -> ScoreVector:
        if record.image_id not in self._anns:
            raise BackendError(f"image {record.image_id!r} not in oracle dataset")
        scores = np.zeros(len(self.class_ids), dtype=float)
        anns = self._anns[record.image_id]
        if anns:
            best = max(anns, key=lambda a: iou(a.bbox, box))
            scores[self._index[best.class_id]] = 1.0
        return ScoreVector(class_ids=list(self.class_ids), scores=scores)
