"""Image loading helpers: grayscale pixel access for dataset images with a
small cache, shared by backends, the pipeline and the review service."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import BoundingBox, ImageRecord


def load_grayscale(path) -> np.ndarray:
    """Image file as float32 grayscale array in [0, 255]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float32)


def save_grayscale(array: np.ndarray, path) -> None:
    Image.fromarray(np.clip(array, 0, 255).astype(np.uint8), mode="L").save(path)


def crop_pixels(pixels: np.ndarray, box: BoundingBox) -> np.ndarray:
    """Integer-aligned crop (floor min, ceil max) clipped to the array."""
    h, w = pixels.shape[:2]
    x0 = max(0, int(np.floor(box.x_min)))
    y0 = max(0, int(np.floor(box.y_min)))
    x1 = min(w, int(np.ceil(box.x_max)))
    y1 = min(h, int(np.ceil(box.y_max)))
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"degenerate crop {box.as_list()} for {w}x{h} image")
    return pixels[y0:y1, x0:x1]


class ImageStore:
    """Resolves image records to pixel arrays, from disk (file_name relative
    to a root directory) or from an in-memory mapping."""

    def __init__(
        self,
        root: Path | str | None = None,
        arrays: dict[str, np.ndarray] | None = None,
        cache_size: int = 64,
    ):
        self.root = Path(root) if root is not None else None
        self.arrays = dict(arrays) if arrays else {}
        self._cache: dict[str, np.ndarray] = {}
        self._cache_size = cache_size

    def put(self, image_id: str, pixels: np.ndarray) -> None:
        self.arrays[image_id] = pixels

    def path_for(self, record: ImageRecord) -> Path:
        if self.root is None:
            raise KeyError(f"no image root configured (image {record.image_id!r})")
        return self.root / record.file_name

    def pixels(self, record: ImageRecord) -> np.ndarray:
        if record.image_id in self.arrays:
            return self.arrays[record.image_id]
        if record.image_id in self._cache:
            return self._cache[record.image_id]
        arr = load_grayscale(self.path_for(record))
        if len(self._cache) >= self._cache_size:
            self._cache.pop(next(iter(self._cache)))
        self._cache[record.image_id] = arr
        return arr
