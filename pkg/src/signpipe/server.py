"""HTTP review service: serves tablet images, predicted hotspots with
ranked suggestions, and the event-sourced review sessions. All mutations go
through the session edit log; writes use optimistic sequence locking."""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .backends import Predictions, load_predictions
from .dataset import Dataset, dataset_to_dict, load_dataset
from .images import ImageStore
from .review import (
    EditEvent,
    ReviewError,
    SessionStore,
    StaleSequenceError,
    export_annotations,
    now_iso,
)

TOKEN_ENV = "SIGNPIPE_TOKEN"


def create_app(
    dataset: Dataset | str | Path,
    predictions: Predictions | str | Path,
    images_root: str | Path | None = None,
    sessions_dir: str | Path = "sessions",
    static_dir: str | Path | None = None,
) -> FastAPI:
    if not isinstance(dataset, Dataset):
        dataset = load_dataset(dataset)
    if not isinstance(predictions, Predictions):
        predictions = load_predictions(predictions)

    store = SessionStore(sessions_dir, dataset, predictions)
    images = {img.image_id: img for img in dataset.images}
    image_store = ImageStore(root=images_root) if images_root else None
    etags: dict[str, str] = {}

    app = FastAPI(title="signpipe review service")

    def require_auth(request: Request) -> None:
        token = os.environ.get(TOKEN_ENV)
        if not token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    auth = Depends(require_auth)

    @app.get("/api/tablets", dependencies=[auth])
    def list_tablets():
        counts: dict[str, int] = {}
        for img in dataset.images:
            counts[img.tablet_id] = counts.get(img.tablet_id, 0) + 1
        return [
            {"tablet_id": tid, "image_count": n} for tid, n in counts.items()
        ]

    @app.get("/api/tablets/{tablet_id}/images", dependencies=[auth])
    def tablet_images(tablet_id: str):
        records = [img for img in dataset.images if img.tablet_id == tablet_id]
        if not records:
            raise HTTPException(status_code=404, detail=f"unknown tablet {tablet_id!r}")
        return [
            {
                "image_id": img.image_id,
                "file_name": img.file_name,
                "width": img.width,
                "height": img.height,
                "annotation_count": len(img.annotations),
            }
            for img in records
        ]

    @app.get("/api/images/{image_id}", dependencies=[auth])
    def image_binary(image_id: str, request: Request):
        record = images.get(image_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")
        if image_store is None:
            raise HTTPException(status_code=404, detail="no images root configured")
        path = image_store.path_for(record)
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"image file missing: {path.name}")
        data = path.read_bytes()
        etag = etags.get(image_id)
        if etag is None:
            etag = hashlib.sha256(data).hexdigest()[:32]
            etags[image_id] = etag
        if request.headers.get("if-none-match") == etag:
            return Response(status_code=304)
        media = "image/png" if path.suffix.lower() == ".png" else "image/jpeg"
        return Response(content=data, media_type=media, headers={"ETag": etag})

    @app.get("/api/images/{image_id}/hotspots", dependencies=[auth])
    def image_hotspots(image_id: str):
        if image_id not in images:
            raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")
        boxes = predictions.images.get(image_id, [])
        class_ids = sorted(dataset.class_ids())
        names = {c.class_id: c.name for c in dataset.catalog}
        out = []
        for idx, b in enumerate(boxes):
            suggestions = []
            if b.class_scores is not None:
                order = sorted(
                    range(len(class_ids)), key=lambda i: (-b.class_scores[i], class_ids[i])
                )
                suggestions = [
                    {
                        "class_id": class_ids[i],
                        "name": names.get(class_ids[i], ""),
                        "score": b.class_scores[i],
                    }
                    for i in order[:5]
                ]
            out.append(
                {
                    "hotspot_id": f"{image_id}/{idx}",
                    "bbox": b.bbox.as_list(),
                    "score": b.score,
                    "suggestions": suggestions,
                }
            )
        return {"image_id": image_id, "hotspots": out}

    @app.get("/api/catalog", dependencies=[auth])
    def catalog():
        return [{"class_id": c.class_id, "name": c.name} for c in dataset.catalog]

    @app.post("/api/sessions", dependencies=[auth])
    def create_session_endpoint(body: dict | None = None):
        session_id = (body or {}).get("session_id") or f"session-{len(store.session_ids()) + 1}"
        try:
            session = store.create(session_id)
        except ReviewError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return session.to_dict()

    @app.get("/api/sessions/{session_id}", dependencies=[auth])
    def get_session(session_id: str):
        try:
            return store.get(session_id).to_dict()
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/api/sessions/{session_id}/events", dependencies=[auth])
    def post_event(session_id: str, body: dict):
        try:
            store.get(session_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        body = dict(body)
        body.setdefault("timestamp", now_iso())
        try:
            event = EditEvent.from_dict(body)
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=f"malformed event: {exc}")
        try:
            session = store.apply(session_id, event)
        except StaleSequenceError as exc:
            return JSONResponse(
                status_code=409,
                content={"error": "stale_seq", "detail": str(exc),
                         "last_seq": store.get(session_id).last_seq},
            )
        except ReviewError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"applied": event.seq, "last_seq": session.last_seq}

    @app.get("/api/sessions/{session_id}/export", dependencies=[auth])
    def export(session_id: str):
        try:
            session = store.get(session_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return dataset_to_dict(export_annotations(session))

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve(app: FastAPI, host: str = "127.0.0.1", port: int = 8008) -> None:
    import uvicorn

    uvicorn.run(app, host=host, port=port)
