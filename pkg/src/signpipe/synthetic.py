"""Synthetic tablet corpus generator: wedge-stroke glyphs laid out on
near-horizontal lines over a lightly textured background, with exact
ground-truth boxes emitted in reading order. Deterministic in the seed."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .dataset import Annotation, BoundingBox, Dataset, ImageRecord, SignClass


@dataclass
class SynthConfig:
    num_classes: int = 12
    tablets: int = 10
    lines_per_tablet: tuple[int, int] = (3, 5)  # inclusive range
    signs_per_line: tuple[int, int] = (5, 9)
    slope_range: tuple[float, float] = (0.0, 0.0)
    # Geometry (pixels)
    glyph_size: int = 30
    x_spacing: int = 46
    line_spacing: int = 80
    margin: int = 24
    # Appearance / noise
    background: float = 200.0
    ink: float = 45.0
    background_noise: float = 6.0
    stroke_jitter: float = 0.6
    y_jitter: float = 0.0

    def __post_init__(self):
        if self.num_classes < 1 or self.tablets < 1:
            raise ValueError("num_classes and tablets must be >= 1")
        for lo, hi in (self.lines_per_tablet, self.signs_per_line):
            if lo < 1 or hi < lo:
                raise ValueError("ranges must satisfy 1 <= lo <= hi")
        if self.slope_range[0] > self.slope_range[1]:
            raise ValueError("slope_range must be (lo, hi) with lo <= hi")
        if self.glyph_size < 8 or self.x_spacing <= 0 or self.line_spacing <= 0:
            raise ValueError("invalid geometry")


def _glyph_strokes(class_id: int, style_seed: int) -> list[tuple[float, float, float, float]]:
    """Deterministic wedge strokes for a glyph class: (angle, offset, length,
    head width) in glyph-radius units. Strokes share a base near the center
    (one connected ink blob) and come in point-symmetric pairs so the ink
    fills a box symmetric about the placement center."""
    rng = np.random.default_rng([style_seed, class_id])
    n_base = int(rng.integers(1, 3))
    strokes = []
    for _ in range(n_base):
        angle = float(rng.uniform(0.0, 2.0 * math.pi))
        offset = float(rng.uniform(0.0, 0.15))
        length = float(rng.uniform(0.55, 0.95))
        head_w = float(rng.uniform(0.22, 0.38))
        strokes.append((angle, offset, length, head_w))
        strokes.append((angle + math.pi, offset, length, head_w))
    return strokes


def _stroke_polygon(
    cx: float, cy: float, radius: float, stroke, jitter: float, rng
) -> list[tuple[float, float]]:
    angle, offset, length, head_w = stroke
    ux, uy = math.cos(angle), math.sin(angle)
    px, py = -uy, ux  # perpendicular
    base_x = cx + offset * radius * ux
    base_y = cy + offset * radius * uy
    half = head_w * radius / 2.0
    tip_x = base_x + length * radius * ux
    tip_y = base_y + length * radius * uy
    pts = [
        (base_x + half * px, base_y + half * py),
        (base_x - half * px, base_y - half * py),
        (tip_x, tip_y),
    ]
    if jitter > 0:
        pts = [(x + rng.uniform(-jitter, jitter), y + rng.uniform(-jitter, jitter)) for x, y in pts]
    return pts


def _render_glyph(
    draw: ImageDraw.ImageDraw,
    cx: float,
    cy: float,
    class_id: int,
    config: SynthConfig,
    style_seed: int,
    rng,
) -> BoundingBox:
    """Draw one glyph instance centered at (cx, cy); returns its bounding box,
    symmetric about the center so the box centroid equals the placement."""
    radius = config.glyph_size / 2.0
    half_w = half_h = 0.0
    for stroke in _glyph_strokes(class_id, style_seed):
        pts = _stroke_polygon(cx, cy, radius, stroke, config.stroke_jitter, rng)
        ink = config.ink + rng.uniform(-8.0, 8.0)
        draw.polygon(pts, fill=int(np.clip(ink, 0, 255)))
        for x, y in pts:
            half_w = max(half_w, abs(x - cx))
            half_h = max(half_h, abs(y - cy))
    pad = 1.0
    return BoundingBox(cx - half_w - pad, cy - half_h - pad, cx + half_w + pad, cy + half_h + pad)


def generate_synthetic(
    config: SynthConfig,
    seed: int,
    out_dir: Path | str | None = None,
    render: bool = True,
) -> tuple[Dataset, dict[str, np.ndarray]]:
    """Build a synthetic corpus: one image per tablet, glyphs on slanted
    lines, annotations listed in reading order (top line first, left to
    right). Returns the dataset and, when render is set, the pixel arrays
    (also written as PNGs under out_dir when given).

    annotation_id is "<image_id>/<index>" so exports reconstructed from
    predictions can match the ground truth exactly.
    """
    catalog = [SignClass(c, f"SIGN{c:03d}") for c in range(config.num_classes)]
    images: list[ImageRecord] = []
    arrays: dict[str, np.ndarray] = {}
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    for t in range(config.tablets):
        rng = np.random.default_rng([seed, t])
        tablet_id = f"T{t:04d}"
        image_id = f"{tablet_id}-0"
        n_lines = int(rng.integers(config.lines_per_tablet[0], config.lines_per_tablet[1] + 1))
        placements: list[tuple[float, float, int]] = []  # cx, cy, class_id
        x0 = config.margin + config.glyph_size / 2.0
        max_x = 0.0
        for li in range(n_lines):
            n_signs = int(rng.integers(config.signs_per_line[0], config.signs_per_line[1] + 1))
            slope = float(rng.uniform(config.slope_range[0], config.slope_range[1]))
            base_y = li * config.line_spacing
            for si in range(n_signs):
                cx = x0 + si * config.x_spacing
                cy = base_y + slope * (cx - x0)
                if config.y_jitter > 0:
                    cy += float(rng.uniform(-config.y_jitter, config.y_jitter))
                class_id = int(rng.integers(0, config.num_classes))
                placements.append((cx, cy, class_id))
                max_x = max(max_x, cx)

        # Shift sloped lines back inside the canvas and size to content.
        min_cy = min(cy for _, cy, _ in placements)
        max_cy = max(cy for _, cy, _ in placements)
        shift = config.margin + config.glyph_size / 2.0 - min_cy
        placements = [(cx, cy + shift, cls) for cx, cy, cls in placements]
        width = int(math.ceil(max_x + config.glyph_size / 2.0 + config.margin))
        height = int(math.ceil(max_cy + shift + config.glyph_size / 2.0 + config.margin))

        canvas = Image.new("L", (width, height), color=int(config.background))
        drawer = ImageDraw.Draw(canvas)
        annotations = []
        for idx, (cx, cy, class_id) in enumerate(placements):
            bbox = _render_glyph(drawer, cx, cy, class_id, config, seed, rng)
            annotations.append(
                Annotation(annotation_id=f"{image_id}/{idx}", bbox=bbox, class_id=class_id)
            )

        record = ImageRecord(
            image_id=image_id,
            tablet_id=tablet_id,
            file_name=f"{image_id}.png",
            width=width,
            height=height,
            annotations=annotations,
        )
        images.append(record)

        if render:
            pixels = np.asarray(canvas, dtype=np.float32)
            if config.background_noise > 0:
                pixels = pixels + rng.normal(0.0, config.background_noise, pixels.shape)
                pixels = np.clip(pixels, 0.0, 255.0).astype(np.float32)
            arrays[image_id] = pixels
            if out_path is not None:
                Image.fromarray(pixels.astype(np.uint8), mode="L").save(
                    out_path / record.file_name
                )

    return Dataset(catalog=catalog, images=images), arrays
