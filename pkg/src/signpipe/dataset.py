"""Detection-dataset model: catalog of sign classes, images with labeled
hotspot boxes, plus the load/save, cropping, relabeling, filtering and
splitting transforms used to prepare a corpus for training and evaluation.

Box convention throughout: XYXY absolute pixel floats, origin at the image
top-left, x rightward, y downward.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace

# Boxes overhanging the image by at most this much are clamped during
# validation; anything worse is rejected as bad data.
OVERHANG_TOLERANCE_PX = 2.0


class DatasetError(Exception):
    """Malformed or invalid dataset content."""


class DatasetParseError(DatasetError):
    """File does not match the dataset JSON schema."""


class DatasetValidationError(DatasetError):
    """Schema parsed but content violates an invariant."""


@dataclass(frozen=True)
class SignClass:
    class_id: int
    name: str


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def is_valid(self) -> bool:
        return (
            self.x_min < self.x_max
            and self.y_min < self.y_max
            and self.x_min >= 0
            and self.y_min >= 0
        )

    def shifted(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class Annotation:
    annotation_id: str
    bbox: BoundingBox
    class_id: int


@dataclass
class ImageRecord:
    image_id: str
    tablet_id: str
    file_name: str
    width: int
    height: int
    annotations: list[Annotation] = field(default_factory=list)


@dataclass
class Dataset:
    catalog: list[SignClass] = field(default_factory=list)
    images: list[ImageRecord] = field(default_factory=list)

    def class_ids(self) -> set[int]:
        return {c.class_id for c in self.catalog}

    def class_by_id(self) -> dict[int, SignClass]:
        return {c.class_id: c for c in self.catalog}

    def class_by_name(self) -> dict[str, SignClass]:
        return {c.name: c for c in self.catalog}

    def tablet_ids(self) -> list[str]:
        """Unique tablet ids in first-appearance order."""
        seen: dict[str, None] = {}
        for img in self.images:
            seen.setdefault(img.tablet_id, None)
        return list(seen)

    def total_annotations(self) -> int:
        return sum(len(img.annotations) for img in self.images)


@dataclass
class FoldAssignment:
    k: int
    tablet_to_fold: dict[str, int]
    seed: int

    def tablets_in_fold(self, fold: int) -> list[str]:
        return sorted(t for t, f in self.tablet_to_fold.items() if f == fold)


# ---------------------------------------------------------------------------
# Validation

def _clamp_box(box: BoundingBox, width: float, height: float) -> BoundingBox:
    return BoundingBox(
        max(0.0, min(box.x_min, width)),
        max(0.0, min(box.y_min, height)),
        max(0.0, min(box.x_max, width)),
        max(0.0, min(box.y_max, height)),
    )


def validate_dataset(dataset: Dataset) -> Dataset:
    """Check catalog and image invariants; returns a dataset whose boxes are
    clamped to image bounds where the overhang was within tolerance.

    Raises DatasetValidationError naming the offending image/annotation.
    """
    seen_ids: set[int] = set()
    seen_names: set[str] = set()
    for cls in dataset.catalog:
        if cls.class_id in seen_ids:
            raise DatasetValidationError(f"duplicate class_id {cls.class_id} in catalog")
        if not cls.name:
            raise DatasetValidationError(f"empty name for class_id {cls.class_id}")
        if cls.name in seen_names:
            raise DatasetValidationError(f"duplicate class name {cls.name!r} in catalog")
        seen_ids.add(cls.class_id)
        seen_names.add(cls.name)

    known = dataset.class_ids()
    images_out: list[ImageRecord] = []
    seen_image_ids: set[str] = set()
    for img in dataset.images:
        if img.image_id in seen_image_ids:
            raise DatasetValidationError(f"duplicate image_id {img.image_id!r}")
        seen_image_ids.add(img.image_id)
        if not img.tablet_id:
            raise DatasetValidationError(f"image {img.image_id!r}: empty tablet_id")
        if img.width <= 0 or img.height <= 0:
            raise DatasetValidationError(
                f"image {img.image_id!r}: non-positive dimensions {img.width}x{img.height}"
            )
        anns_out: list[Annotation] = []
        for ann in img.annotations:
            box = ann.bbox
            if not (box.x_min < box.x_max and box.y_min < box.y_max):
                raise DatasetValidationError(
                    f"image {img.image_id!r} annotation {ann.annotation_id!r}: "
                    f"degenerate bbox {box.as_list()}"
                )
            overhang = max(
                0.0 - box.x_min,
                0.0 - box.y_min,
                box.x_max - img.width,
                box.y_max - img.height,
                0.0,
            )
            if overhang > OVERHANG_TOLERANCE_PX:
                raise DatasetValidationError(
                    f"image {img.image_id!r} annotation {ann.annotation_id!r}: "
                    f"bbox {box.as_list()} outside image bounds by {overhang:.2f}px"
                )
            if overhang > 0:
                box = _clamp_box(box, img.width, img.height)
                ann = replace(ann, bbox=box)
            if ann.class_id not in known:
                raise DatasetValidationError(
                    f"image {img.image_id!r} annotation {ann.annotation_id!r}: "
                    f"unknown class_id {ann.class_id}"
                )
            anns_out.append(ann)
        images_out.append(replace(img, annotations=anns_out))
    return Dataset(catalog=list(dataset.catalog), images=images_out)


# ---------------------------------------------------------------------------
# Serialization.  Schema (one UTF-8 JSON document):
#   {"catalog": [{"class_id": int, "name": str}],
#    "images": [{"image_id": str, "tablet_id": str, "file_name": str,
#                "width": int, "height": int,
#                "annotations": [{"annotation_id": str,
#                                 "bbox": [x_min, y_min, x_max, y_max],
#                                 "class_id": int}]}]}

def dataset_to_dict(dataset: Dataset) -> dict:
    return {
        "catalog": [{"class_id": c.class_id, "name": c.name} for c in dataset.catalog],
        "images": [
            {
                "image_id": img.image_id,
                "tablet_id": img.tablet_id,
                "file_name": img.file_name,
                "width": img.width,
                "height": img.height,
                "annotations": [
                    {
                        "annotation_id": a.annotation_id,
                        "bbox": a.bbox.as_list(),
                        "class_id": a.class_id,
                    }
                    for a in img.annotations
                ],
            }
            for img in dataset.images
        ],
    }


def dataset_from_dict(doc: dict) -> Dataset:
    try:
        catalog = [SignClass(int(c["class_id"]), str(c["name"])) for c in doc["catalog"]]
        images = []
        for rec in doc["images"]:
            anns = [
                Annotation(
                    annotation_id=str(a["annotation_id"]),
                    bbox=BoundingBox(*(float(v) for v in a["bbox"])),
                    class_id=int(a["class_id"]),
                )
                for a in rec["annotations"]
            ]
            images.append(
                ImageRecord(
                    image_id=str(rec["image_id"]),
                    tablet_id=str(rec["tablet_id"]),
                    file_name=str(rec["file_name"]),
                    width=int(rec["width"]),
                    height=int(rec["height"]),
                    annotations=anns,
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetParseError(f"dataset document does not match schema: {exc}") from exc
    return Dataset(catalog=catalog, images=images)


def load_dataset(path) -> Dataset:
    """Load and validate a dataset JSON file. Annotation order is preserved
    exactly as stored."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DatasetParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise DatasetParseError(f"{path}: top-level document must be an object")
    return validate_dataset(dataset_from_dict(doc))


def save_dataset(dataset: Dataset, path) -> None:
    """Write dataset JSON such that load_dataset(path) round-trips exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset_to_dict(dataset), fh, ensure_ascii=False, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Preprocessing transforms

def crop_to_annotations(
    image: ImageRecord, margin_frac: float = 0.02
) -> tuple[ImageRecord, BoundingBox]:
    """Crop an image record to the union extent of its annotations, expanded
    by margin_frac of the extent size on each side, clamped to the image and
    snapped outward to whole pixels.

    Returns the shifted record and the crop rectangle in original-image
    coordinates. Pixel data is not touched here; callers crop the stored
    image file with the returned rectangle.
    """
    if not image.annotations:
        raise DatasetValidationError(f"image {image.image_id!r}: no annotations to crop to")
    if margin_frac < 0:
        raise ValueError("margin_frac must be >= 0")

    x0 = min(a.bbox.x_min for a in image.annotations)
    y0 = min(a.bbox.y_min for a in image.annotations)
    x1 = max(a.bbox.x_max for a in image.annotations)
    y1 = max(a.bbox.y_max for a in image.annotations)
    mx = margin_frac * (x1 - x0)
    my = margin_frac * (y1 - y0)
    # Snap outward to whole pixels so the rectangle crops image files exactly.
    crop = BoundingBox(
        math.floor(max(0.0, x0 - mx)),
        math.floor(max(0.0, y0 - my)),
        math.ceil(min(float(image.width), x1 + mx)),
        math.ceil(min(float(image.height), y1 + my)),
    )
    new_w = int(crop.x_max - crop.x_min)
    new_h = int(crop.y_max - crop.y_min)

    shifted = []
    for ann in image.annotations:
        box = ann.bbox.shifted(-crop.x_min, -crop.y_min)
        # Dirty inputs whose boxes overhang the crop get clamped; valid
        # datasets are unaffected since the crop contains every box.
        box = _clamp_box(box, new_w, new_h)
        shifted.append(replace(ann, bbox=box))

    record = replace(image, width=new_w, height=new_h, annotations=shifted)
    return record, crop


@dataclass
class RelabelReport:
    relabeled: int = 0
    dropped: int = 0
    pruned_classes: list[int] = field(default_factory=list)


def relabel_numerals(
    dataset: Dataset,
    mapping: dict[str, str],
    drop_set: set[str] | frozenset[str] = frozenset(),
    prune_empty: bool = False,
    add_missing: bool = True,
) -> tuple[Dataset, RelabelReport]:
    """Merge numeral labels into their syllabic sign classes and drop
    composite-numeral annotations.

    mapping maps source label -> target label (e.g. "1" -> "DIŠ", "10" -> "U");
    annotations whose label is in drop_set are removed. Target labels missing
    from the catalog are added when add_missing is set, otherwise an error is
    raised. prune_empty removes catalog entries left with zero annotations.
    """
    by_name = dataset.class_by_name()
    catalog = list(dataset.catalog)
    for target in mapping.values():
        if target not in by_name:
            if not add_missing:
                raise DatasetValidationError(f"mapping target {target!r} not in catalog")
            new_id = max((c.class_id for c in catalog), default=-1) + 1
            cls = SignClass(new_id, target)
            catalog.append(cls)
            by_name[target] = cls

    id_to_name = {c.class_id: c.name for c in catalog}
    report = RelabelReport()
    images_out = []
    for img in dataset.images:
        anns_out = []
        for ann in img.annotations:
            name = id_to_name.get(ann.class_id, "")
            if name in drop_set:
                report.dropped += 1
                continue
            if name in mapping:
                ann = replace(ann, class_id=by_name[mapping[name]].class_id)
                report.relabeled += 1
            anns_out.append(ann)
        images_out.append(replace(img, annotations=anns_out))

    if prune_empty:
        used = {a.class_id for img in images_out for a in img.annotations}
        report.pruned_classes = [c.class_id for c in catalog if c.class_id not in used]
        catalog = [c for c in catalog if c.class_id in used]

    return Dataset(catalog=catalog, images=images_out), report


@dataclass
class FilterReport:
    removed_low_res: list[str] = field(default_factory=list)
    removed_denylisted: list[str] = field(default_factory=list)

    @property
    def removed(self) -> list[str]:
        return self.removed_low_res + self.removed_denylisted


def filter_quality(
    dataset: Dataset, min_dim: int = 0, denylist: set[str] | frozenset[str] = frozenset()
) -> tuple[Dataset, FilterReport]:
    """Drop images below a resolution floor or on an explicit denylist."""
    report = FilterReport()
    kept = []
    for img in dataset.images:
        if img.image_id in denylist:
            report.removed_denylisted.append(img.image_id)
        elif min(img.width, img.height) < min_dim:
            report.removed_low_res.append(img.image_id)
        else:
            kept.append(img)
    return Dataset(catalog=list(dataset.catalog), images=kept), report


def split_by_tablet(dataset: Dataset, k: int, seed: int) -> FoldAssignment:
    """Partition tablets into k folds of near-equal tablet counts (sizes differ
    by at most 1); all images of a tablet share a fold."""
    if k < 2:
        raise ValueError("k must be >= 2")
    tablets = sorted(dataset.tablet_ids())
    if len(tablets) < k:
        raise ValueError(f"need at least {k} tablets to make {k} folds, have {len(tablets)}")
    rng = random.Random(seed)
    rng.shuffle(tablets)
    n = len(tablets)
    base, extra = divmod(n, k)
    assignment: dict[str, int] = {}
    idx = 0
    for fold in range(k):
        size = base + (1 if fold < extra else 0)
        for t in tablets[idx : idx + size]:
            assignment[t] = fold
        idx += size
    return FoldAssignment(k=k, tablet_to_fold=assignment, seed=seed)


def select_fold(dataset: Dataset, folds: FoldAssignment, fold: int, train: bool) -> Dataset:
    """Images of the given fold's tablets (train=False) or all others (train=True)."""
    missing = [t for t in dataset.tablet_ids() if t not in folds.tablet_to_fold]
    if missing:
        raise ValueError(f"tablets not covered by fold assignment: {missing[:5]}")
    if train:
        images = [i for i in dataset.images if folds.tablet_to_fold[i.tablet_id] != fold]
    else:
        images = [i for i in dataset.images if folds.tablet_to_fold[i.tablet_id] == fold]
    return Dataset(catalog=list(dataset.catalog), images=images)


def subsample_training(
    dataset: Dataset, fraction: float, seed: int, unit: str = "image"
) -> Dataset:
    """Retain ceil(fraction * N) units chosen uniformly without replacement.

    unit is "image" or "tablet"; original image order is preserved among the
    retained units and the draw is deterministic in the seed.
    """
    if not (0 < fraction <= 1):
        raise ValueError("fraction must be in (0, 1]")
    if unit not in ("image", "tablet"):
        raise ValueError(f"unknown subsample unit {unit!r}")
    if fraction == 1.0:
        return Dataset(catalog=list(dataset.catalog), images=list(dataset.images))

    if unit == "image":
        ids = sorted(img.image_id for img in dataset.images)
    else:
        ids = sorted(dataset.tablet_ids())
    m = math.ceil(fraction * len(ids))
    chosen = set(random.Random(seed).sample(ids, m))
    if unit == "image":
        images = [i for i in dataset.images if i.image_id in chosen]
    else:
        images = [i for i in dataset.images if i.tablet_id in chosen]
    return Dataset(catalog=list(dataset.catalog), images=images)
