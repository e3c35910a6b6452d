"""Wire protocol for external detection/classification backends.

Line-delimited JSON over standard streams (one request, one response, one
line each) or the same documents over local HTTP POST. Requests:

    {"op": "detect", "image": "<path>"}
    {"op": "classify", "image": "<path>", "boxes": [[x0, y0, x1, y1], ...]}

Responses mirror one entry of the predictions schema:

    {"image_id": "<path>", "boxes": [{"bbox": [...], "score": s,
                                      "class_scores": [...]}]}

and errors are {"error": "<message>"}. One in-flight request per connection.
"""

from __future__ import annotations

import json
import subprocess
import sys
from typing import Callable

import numpy as np

from .backends import (
    BackendError,
    DetectionSet,
    PredictedBox,
    ScoreVector,
    load_predictions,
)
from .dataset import BoundingBox, ImageRecord
from .geometry import ScoredBox
from .images import ImageStore


def _boxes_to_json(boxes: list[PredictedBox]) -> list[dict]:
    out = []
    for b in boxes:
        entry = {"bbox": b.bbox.as_list(), "score": b.score}
        if b.class_scores is not None:
            entry["class_scores"] = list(b.class_scores)
        out.append(entry)
    return out


def handle_request(
    request: dict,
    detect_fn: Callable[[str], list[PredictedBox]],
    classify_fn: Callable[[str, list[list[float]]], list[PredictedBox]],
) -> dict:
    """Dispatch one protocol request to the given handlers; exceptions become
    structured error responses."""
    try:
        op = request.get("op")
        if op == "detect":
            boxes = detect_fn(str(request["image"]))
        elif op == "classify":
            boxes = classify_fn(str(request["image"]), request["boxes"])
        else:
            return {"error": f"unknown op {op!r}"}
        return {"image_id": str(request["image"]), "boxes": _boxes_to_json(boxes)}
    except KeyError as exc:
        return {"error": f"missing request field: {exc}"}
    except Exception as exc:  # noqa: BLE001 - protocol boundary
        return {"error": str(exc)}


def serve_stdio(detect_fn, classify_fn, stdin=None, stdout=None) -> None:
    """Answer protocol requests line by line until EOF."""
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
            response = handle_request(request, detect_fn, classify_fn)
        stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
        stdout.flush()


class StreamBackendClient:
    """Client for a protocol-speaking subprocess; requests are serialized,
    one in flight at a time."""

    def __init__(self, command: list[str]):
        self.command = list(command)
        self._proc: subprocess.Popen | None = None

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def request(self, payload: dict) -> dict:
        proc = self._ensure()
        proc.stdin.write(json.dumps(payload, ensure_ascii=False) + "\n")
        proc.stdin.flush()
        line = proc.stdout.readline()
        if not line:
            raise BackendError(f"backend process {self.command[0]!r} closed the stream")
        response = json.loads(line)
        if "error" in response:
            raise BackendError(f"backend error: {response['error']}")
        return response

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
        self._proc = None


class HttpBackendClient:
    """Same protocol over HTTP POST of one JSON document per request."""

    def __init__(self, url: str):
        self.url = url

    def request(self, payload: dict) -> dict:
        import requests

        resp = requests.post(self.url, json=payload, timeout=120)
        resp.raise_for_status()
        response = resp.json()
        if "error" in response:
            raise BackendError(f"backend error: {response['error']}")
        return response

    def close(self) -> None:
        pass


def _parse_response_boxes(response: dict) -> list[PredictedBox]:
    boxes = []
    for b in response.get("boxes", []):
        scores = b.get("class_scores")
        boxes.append(
            PredictedBox(
                bbox=BoundingBox(*(float(v) for v in b["bbox"])),
                score=float(b["score"]),
                class_scores=None if scores is None else [float(s) for s in scores],
            )
        )
    return boxes


class RemoteDetector:
    """Detector contract over a protocol client; images are referenced by
    their file path under the store root."""

    def __init__(self, client, store: ImageStore):
        self.client = client
        self.store = store

    def detect(self, record: ImageRecord) -> DetectionSet:
        path = str(self.store.path_for(record))
        response = self.client.request({"op": "detect", "image": path})
        boxes = [
            ScoredBox(bbox=b.bbox, score=b.score, source_id=f"{record.image_id}/{i}")
            for i, b in enumerate(_parse_response_boxes(response))
        ]
        return DetectionSet(image_id=record.image_id, boxes=boxes)


class RemoteClassifier:
    def __init__(self, client, store: ImageStore, class_ids: list[int]):
        self.client = client
        self.store = store
        self.class_ids = list(class_ids)

    def classify(self, record: ImageRecord, box: BoundingBox) -> ScoreVector:
        path = str(self.store.path_for(record))
        response = self.client.request(
            {"op": "classify", "image": path, "boxes": [box.as_list()]}
        )
        boxes = _parse_response_boxes(response)
        if not boxes or boxes[0].class_scores is None:
            raise BackendError("classify response carried no class_scores")
        return ScoreVector(
            class_ids=list(self.class_ids), scores=np.array(boxes[0].class_scores, dtype=float)
        )


def _fixture_main(argv: list[str]) -> int:
    """Serve a stored predictions file over stdio; image ids are matched by
    file stem so callers may pass paths."""
    import argparse

    parser = argparse.ArgumentParser(prog="python -m signpipe.protocol")
    parser.add_argument("--predictions", required=True, help="predictions JSON to replay")
    args = parser.parse_args(argv)
    preds = load_predictions(args.predictions)

    def lookup(image: str) -> list[PredictedBox]:
        from pathlib import Path

        if image in preds.images:
            return preds.images[image]
        stem = Path(image).stem
        if stem in preds.images:
            return preds.images[stem]
        raise BackendError(f"no stored predictions for {image!r}")

    def detect(image: str) -> list[PredictedBox]:
        return [PredictedBox(bbox=b.bbox, score=b.score) for b in lookup(image)]

    def classify(image: str, boxes: list[list[float]]) -> list[PredictedBox]:
        from .geometry import iou as box_iou

        stored = [b for b in lookup(image) if b.class_scores is not None]
        if not stored:
            raise BackendError(f"no stored class scores for {image!r}")
        out = []
        for raw in boxes:
            query = BoundingBox(*(float(v) for v in raw))
            best = max(stored, key=lambda b: box_iou(b.bbox, query))
            out.append(PredictedBox(bbox=query, score=1.0, class_scores=best.class_scores))
        return out

    serve_stdio(detect, classify)
    return 0


if __name__ == "__main__":
    raise SystemExit(_fixture_main(sys.argv[1:]))
