"""Model loading and the deterministic stub models.

Serialized model contract (TorchScript, loaded with torch.jit.load):
  detector:   takes a float32 HxW grayscale tensor scaled to [0, 1] and
              returns (boxes, scores) with boxes Nx4 in absolute XYXY pixels
              and scores length N in [0, 1].
  classifier: takes a float32 Bx1xSxS batch of standardized crops and
              returns BxC logits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class AdapterConfig:
    detector_model: str | None = None
    classifier_model: str | None = None
    device: str = "cpu"
    crop_side: int = 50
    score_threshold: float = 0.05
    stub: bool = False
    stub_classes: int = 141

    def __post_init__(self):
        if self.crop_side <= 0:
            raise ValueError("crop_side must be > 0")
        if not self.stub:
            for path in (self.detector_model, self.classifier_model):
                if path is not None and not Path(path).is_file():
                    raise FileNotFoundError(f"model file not found: {path}")


class TorchDetector:
    def __init__(self, path: str, device: str):
        import torch

        self._torch = torch
        self.module = torch.jit.load(path, map_location=device).eval()
        self.device = device

    def detect(self, pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        torch = self._torch
        with torch.no_grad():
            tensor = torch.from_numpy(pixels / 255.0).float().to(self.device)
            boxes, scores = self.module(tensor)
        return boxes.cpu().numpy(), scores.cpu().numpy()


class TorchClassifier:
    def __init__(self, path: str, device: str):
        import torch

        self._torch = torch
        self.module = torch.jit.load(path, map_location=device).eval()
        self.device = device

    def classify(self, batch: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            tensor = torch.from_numpy(batch).float().to(self.device)
            logits = self.module(tensor)
        return logits.cpu().numpy()


class StubDetector:
    """Deterministic fake detector: a grid of boxes sized from the image,
    scores decaying with grid position. Exercises the protocol without any
    model weights."""

    def detect(self, pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h, w = pixels.shape
        cell_w = max(8.0, w / 4.0)
        cell_h = max(8.0, h / 3.0)
        boxes = []
        scores = []
        index = 0
        for row in range(3):
            for col in range(4):
                x0 = col * cell_w + 0.1 * cell_w
                y0 = row * cell_h + 0.1 * cell_h
                x1 = min(w, x0 + 0.8 * cell_w)
                y1 = min(h, y0 + 0.8 * cell_h)
                if x1 - x0 >= 2 and y1 - y0 >= 2:
                    boxes.append([x0, y0, x1, y1])
                    scores.append(0.95 - 0.05 * index)
                index += 1
        return np.array(boxes, dtype=np.float64), np.array(scores, dtype=np.float64)


class StubClassifier:
    """Deterministic fake classifier: logits are a smooth function of the
    crop's mean intensity, so identical crops always score identically."""

    def __init__(self, num_classes: int):
        self.num_classes = num_classes

    def classify(self, batch: np.ndarray) -> np.ndarray:
        means = batch.reshape(batch.shape[0], -1).mean(axis=1)
        logits = np.zeros((batch.shape[0], self.num_classes))
        for i, m in enumerate(means):
            for c in range(self.num_classes):
                logits[i, c] = math.cos((c + 1) * (float(m) + 1.0))
        return logits


def build_models(config: AdapterConfig):
    if config.stub:
        return StubDetector(), StubClassifier(config.stub_classes)
    detector = (
        TorchDetector(config.detector_model, config.device) if config.detector_model else None
    )
    classifier = (
        TorchClassifier(config.classifier_model, config.device)
        if config.classifier_model
        else None
    )
    return detector, classifier
