"""Protocol server: answers line-delimited JSON requests on stdio.

Requests:
    {"op": "detect", "image": "<path>"}
    {"op": "classify", "image": "<path>", "boxes": [[x0, y0, x1, y1], ...]}

Responses mirror one predictions-schema entry, errors are
{"error": "<message>"}. One request in flight per connection.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
from PIL import Image

from .models import AdapterConfig, build_models


def load_grayscale(path: str) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float32)


def preprocess_crop(pixels: np.ndarray, box: list[float], side: int) -> np.ndarray:
    """Aspect-preserving resize of the crop to the model input side, centered
    with mean-intensity padding, standardized to zero mean / unit variance."""
    h, w = pixels.shape
    x0 = max(0, int(np.floor(box[0])))
    y0 = max(0, int(np.floor(box[1])))
    x1 = min(w, int(np.ceil(box[2])))
    y1 = min(h, int(np.ceil(box[3])))
    if x1 - x0 < 1 or y1 - y0 < 1:
        raise ValueError(f"degenerate crop {box}")
    crop = pixels[y0:y1, x0:x1]
    ch, cw = crop.shape
    scale = side / max(ch, cw)
    new_w = max(1, round(cw * scale))
    new_h = max(1, round(ch * scale))
    resized = np.asarray(
        Image.fromarray(crop, mode="F").resize((new_w, new_h), Image.BILINEAR)
    )
    canvas = np.full((side, side), float(crop.mean()), dtype=np.float32)
    oy = (side - new_h) // 2
    ox = (side - new_w) // 2
    canvas[oy : oy + new_h, ox : ox + new_w] = resized
    std = canvas.std()
    if std == 0:
        return np.zeros((side, side), dtype=np.float32)
    return (canvas - canvas.mean()) / std


class AdapterServer:
    def __init__(self, config: AdapterConfig):
        self.config = config
        self.detector, self.classifier = build_models(config)

    def handle(self, request: dict) -> dict:
        try:
            op = request.get("op")
            if op == "detect":
                return self._detect(str(request["image"]))
            if op == "classify":
                return self._classify(str(request["image"]), request["boxes"])
            return {"error": f"unknown op {op!r}"}
        except KeyError as exc:
            return {"error": f"missing request field: {exc}"}
        except Exception as exc:  # noqa: BLE001 - protocol boundary
            return {"error": str(exc)}

    def _detect(self, image: str) -> dict:
        if self.detector is None:
            return {"error": "no detector model configured"}
        pixels = load_grayscale(image)
        boxes, scores = self.detector.detect(pixels)
        out = []
        for box, score in zip(np.asarray(boxes), np.asarray(scores)):
            if float(score) < self.config.score_threshold:
                continue
            out.append(
                {"bbox": [float(v) for v in box], "score": max(0.0, min(1.0, float(score)))}
            )
        return {"image_id": image, "boxes": out}

    def _classify(self, image: str, boxes) -> dict:
        if self.classifier is None:
            return {"error": "no classifier model configured"}
        if not isinstance(boxes, list) or not boxes:
            return {"error": "classify request needs a non-empty boxes list"}
        pixels = load_grayscale(image)
        batch = np.stack(
            [preprocess_crop(pixels, [float(v) for v in b], self.config.crop_side) for b in boxes]
        )[:, None, :, :]
        logits = self.classifier.classify(batch)
        out = []
        for box, row in zip(boxes, logits):
            out.append(
                {
                    "bbox": [float(v) for v in box],
                    "score": 1.0,
                    "class_scores": [float(v) for v in row],
                }
            )
        return {"image_id": image, "boxes": out}

    def serve_stdio(self, stdin=None, stdout=None) -> None:
        stdin = stdin if stdin is not None else sys.stdin
        stdout = stdout if stdout is not None else sys.stdout
        for line in stdin:
            line = line.strip()
            if not line:
                continue
            try:
                request = json.loads(line)
            except json.JSONDecodeError as exc:
                response = {"error": f"invalid JSON request: {exc}"}
            else:
                response = self.handle(request)
            stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
            stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="neural-adapter", description=__doc__)
    parser.add_argument("--detector-model", help="TorchScript detector path")
    parser.add_argument("--classifier-model", help="TorchScript classifier path")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--crop-side", type=int, default=50)
    parser.add_argument("--score-threshold", type=float, default=0.05)
    parser.add_argument("--stub", action="store_true", help="serve deterministic stub models")
    parser.add_argument("--classes", type=int, default=141, help="stub classifier classes")
    args = parser.parse_args(argv)
    try:
        config = AdapterConfig(
            detector_model=args.detector_model,
            classifier_model=args.classifier_model,
            device=args.device,
            crop_side=args.crop_side,
            score_threshold=args.score_threshold,
            stub=args.stub,
            stub_classes=args.classes,
        )
        server = AdapterServer(config)
    except Exception as exc:  # noqa: BLE001 - startup boundary
        print(f"startup error: {exc}", file=sys.stderr)
        return 2
    server.serve_stdio()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
