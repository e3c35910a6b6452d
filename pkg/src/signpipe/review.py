"""Human-in-the-loop review sessions: predicted hotspots with ranked sign
suggestions, an append-only edit log with optimistic sequence locking, and
export of confirmed hotspots back into the dataset schema.

Session state is a pure fold over the edit log: replaying the log against
the same dataset and predictions reproduces the state exactly.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from .backends import Predictions
from .dataset import Annotation, BoundingBox, Dataset, ImageRecord

EDIT_KINDS = ("move", "resize", "create", "delete", "choose_class", "confirm", "reject")
STATUSES = ("unreviewed", "confirmed", "rejected")


class ReviewError(Exception):
    """Invalid edit event."""


class StaleSequenceError(ReviewError):
    """Event sequence number does not extend the log (optimistic-lock
    conflict)."""


@dataclass
class EditEvent:
    seq: int
    kind: str
    target: str
    payload: dict = field(default_factory=dict)
    actor: str = ""
    timestamp: str = ""

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind,
            "target": self.target,
            "payload": self.payload,
            "actor": self.actor,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EditEvent":
        return cls(
            seq=int(doc["seq"]),
            kind=str(doc["kind"]),
            target=str(doc["target"]),
            payload=dict(doc.get("payload", {})),
            actor=str(doc.get("actor", "")),
            timestamp=str(doc.get("timestamp", "")),
        )


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class HotspotState:
    hotspot_id: str
    image_id: str
    bbox: BoundingBox
    score: float
    suggestions: list[tuple[int, float]]  # ranked (class_id, score)
    chosen_class: int | None = None
    status: str = "unreviewed"

    def to_dict(self) -> dict:
        return {
            "hotspot_id": self.hotspot_id,
            "image_id": self.image_id,
            "bbox": self.bbox.as_list(),
            "score": self.score,
            "suggestions": [[c, s] for c, s in self.suggestions],
            "chosen_class": self.chosen_class,
            "status": self.status,
        }


class ReviewSession:
    """In-memory review state; every mutation goes through apply_edit."""

    def __init__(self, session_id: str, dataset: Dataset):
        self.session_id = session_id
        self.dataset = dataset
        self.hotspots: dict[str, HotspotState] = {}  # insertion-ordered
        self.last_seq = 0
        self._class_ids = dataset.class_ids()
        self._images = {img.image_id: img for img in dataset.images}

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "last_seq": self.last_seq,
            "hotspots": [h.to_dict() for h in self.hotspots.values()],
        }


def _rank_suggestions(class_scores: list[float], class_ids: list[int], top: int = 5):
    order = sorted(range(len(class_ids)), key=lambda i: (-class_scores[i], class_ids[i]))
    return [(class_ids[i], float(class_scores[i])) for i in order[:top]]


def create_session(
    dataset: Dataset, predictions: Predictions, session_id: str = "session"
) -> ReviewSession:
    """Every predicted hotspot enters the session unreviewed, with its
    suggestion list in backend ranking order."""
    session = ReviewSession(session_id, dataset)
    known_images = {img.image_id for img in dataset.images}
    class_ids = sorted(dataset.class_ids())
    for image_id, boxes in predictions.images.items():
        if image_id not in known_images:
            raise ReviewError(f"predictions reference unknown image {image_id!r}")
        for idx, box in enumerate(boxes):
            hid = f"{image_id}/{idx}"
            suggestions = (
                _rank_suggestions(box.class_scores, class_ids)
                if box.class_scores is not None
                else []
            )
            session.hotspots[hid] = HotspotState(
                hotspot_id=hid,
                image_id=image_id,
                bbox=box.bbox,
                score=box.score,
                suggestions=suggestions,
            )
    return session


def _validated_bbox(payload: dict, image: ImageRecord) -> BoundingBox:
    raw = payload.get("bbox")
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise ReviewError("payload must carry bbox [x0, y0, x1, y1]")
    box = BoundingBox(*(float(v) for v in raw))
    if not (box.x_min < box.x_max and box.y_min < box.y_max):
        raise ReviewError(f"degenerate bbox {raw}")
    if box.x_min < 0 or box.y_min < 0 or box.x_max > image.width or box.y_max > image.height:
        raise ReviewError(f"bbox {raw} outside image bounds {image.width}x{image.height}")
    return box


def apply_edit(session: ReviewSession, event: EditEvent) -> ReviewSession:
    """Validate and fold one event into the session state (in place).

    Raises StaleSequenceError unless event.seq == last_seq + 1, and
    ReviewError for unknown targets, invalid boxes or unknown classes.
    """
    if event.seq != session.last_seq + 1:
        raise StaleSequenceError(
            f"event seq {event.seq} does not extend log at {session.last_seq}"
        )
    if event.kind not in EDIT_KINDS:
        raise ReviewError(f"unknown edit kind {event.kind!r}")

    if event.kind == "create":
        if event.target in session.hotspots:
            raise ReviewError(f"hotspot {event.target!r} already exists")
        image_id = event.payload.get("image_id")
        image = session._images.get(image_id)
        if image is None:
            raise ReviewError(f"create references unknown image {image_id!r}")
        bbox = _validated_bbox(event.payload, image)
        chosen = event.payload.get("class_id")
        if chosen is not None and int(chosen) not in session._class_ids:
            raise ReviewError(f"unknown class_id {chosen}")
        session.hotspots[event.target] = HotspotState(
            hotspot_id=event.target,
            image_id=image_id,
            bbox=bbox,
            score=1.0,
            suggestions=[],
            chosen_class=None if chosen is None else int(chosen),
        )
    else:
        spot = session.hotspots.get(event.target)
        if spot is None:
            raise ReviewError(f"unknown hotspot {event.target!r}")
        if event.kind in ("move", "resize"):
            spot.bbox = _validated_bbox(event.payload, session._images[spot.image_id])
        elif event.kind == "delete":
            del session.hotspots[event.target]
        elif event.kind == "choose_class":
            class_id = event.payload.get("class_id")
            if class_id is None or int(class_id) not in session._class_ids:
                raise ReviewError(f"unknown class_id {class_id}")
            spot.chosen_class = int(class_id)
        elif event.kind == "confirm":
            class_id = event.payload.get("class_id")
            if class_id is not None:
                if int(class_id) not in session._class_ids:
                    raise ReviewError(f"unknown class_id {class_id}")
                spot.chosen_class = int(class_id)
            elif spot.chosen_class is None:
                if not spot.suggestions:
                    raise ReviewError(
                        f"hotspot {event.target!r} has no suggestions; confirm needs class_id"
                    )
                spot.chosen_class = spot.suggestions[0][0]
            spot.status = "confirmed"
        elif event.kind == "reject":
            spot.status = "rejected"

    session.last_seq = event.seq
    return session


def replay(session: ReviewSession, events: list[EditEvent]) -> ReviewSession:
    for event in events:
        apply_edit(session, event)
    return session


def export_annotations(session: ReviewSession) -> Dataset:
    """Confirmed hotspots as a dataset in the standard schema; unreviewed and
    rejected hotspots are excluded. A pure function of the replayed log."""
    confirmed: dict[str, list[Annotation]] = {}
    for spot in session.hotspots.values():
        if spot.status != "confirmed":
            continue
        confirmed.setdefault(spot.image_id, []).append(
            Annotation(
                annotation_id=spot.hotspot_id, bbox=spot.bbox, class_id=int(spot.chosen_class)
            )
        )
    images = [
        replace(img, annotations=confirmed.get(img.image_id, []))
        for img in session.dataset.images
    ]
    return Dataset(catalog=list(session.dataset.catalog), images=images)


class SessionStore:
    """Disk-backed sessions: one newline-delimited JSON event log per
    session. Events are appended (and flushed to disk) before the apply is
    acknowledged; reopening a store replays the logs."""

    def __init__(self, directory: Path | str, dataset: Dataset, predictions: Predictions):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.dataset = dataset
        self.predictions = predictions
        self._sessions: dict[str, ReviewSession] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._global = threading.Lock()
        for log in sorted(self.directory.glob("*.ndjson")):
            session_id = log.stem
            session = create_session(dataset, predictions, session_id)
            replay(session, self._read_log(session_id))
            self._sessions[session_id] = session
            self._locks[session_id] = threading.Lock()

    def _log_path(self, session_id: str) -> Path:
        return self.directory / f"{session_id}.ndjson"

    def _read_log(self, session_id: str) -> list[EditEvent]:
        path = self._log_path(session_id)
        if not path.exists():
            return []
        events = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    events.append(EditEvent.from_dict(json.loads(line)))
        return events

    def create(self, session_id: str) -> ReviewSession:
        with self._global:
            if session_id in self._sessions:
                raise ReviewError(f"session {session_id!r} already exists")
            session = create_session(self.dataset, self.predictions, session_id)
            self._sessions[session_id] = session
            self._locks[session_id] = threading.Lock()
            self._log_path(session_id).touch()
            return session

    def get(self, session_id: str) -> ReviewSession:
        session = self._sessions.get(session_id)
        if session is None:
            raise KeyError(f"unknown session {session_id!r}")
        return session

    def session_ids(self) -> list[str]:
        return list(self._sessions)

    def apply(self, session_id: str, event: EditEvent) -> ReviewSession:
        session = self.get(session_id)
        with self._locks[session_id]:
            # apply_edit validates before mutating, so a rejected event
            # leaves both the state and the log untouched.
            apply_edit(session, event)
            try:
                with open(self._log_path(session_id), "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(event.to_dict(), ensure_ascii=False) + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            except OSError:
                # The log is the source of truth: rebuild state from it so
                # the unlogged event is not acknowledged implicitly later.
                rebuilt = create_session(self.dataset, self.predictions, session_id)
                replay(rebuilt, self._read_log(session_id))
                self._sessions[session_id] = rebuilt
                raise
            return session
