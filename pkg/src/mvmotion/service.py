"""HTTP session API for the interactive flow-authoring UI.

The service is a thin stateful wrapper over the library: sessions hold a
view/label selection and the latest motion result, and every computation is
a direct library call so responses match library output bit for bit.
Sessions live in memory and expire after a TTL.
"""

from __future__ import annotations

import base64
import io
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import Body, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from PIL import Image
from pydantic import BaseModel

from .authoring import (
    MotionResult,
    estimate_motion_flows,
    label_raster,
    object_footprint,
    parse_motion_spec,
    warped_previews,
    write_flow_set,
)
from .errors import (
    DegenerateFlow,
    DegeneratePlane,
    DegenerateSelection,
    DegenerateStretch,
    EmptyProjection,
    InvalidDepth,
    InvalidFactor,
    NotFound,
    ValidationError,
)
from .flow import colorize_flow
from .scene import Scene

_CLIENT_FAULTS = (
    ValidationError,
    DegenerateSelection,
    DegenerateFlow,
    DegeneratePlane,
    DegenerateStretch,
    InvalidDepth,
    InvalidFactor,
    EmptyProjection,
)

DEFAULT_TTL_S = 3600.0
THUMBNAIL_WIDTH = 160


def _png_data_uri(array: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(array).save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def _thumbnail(image: np.ndarray) -> str:
    img = Image.fromarray(image)
    height = max(1, round(img.height * THUMBNAIL_WIDTH / img.width))
    return _png_data_uri(np.asarray(img.resize((THUMBNAIL_WIDTH, height), Image.BILINEAR)))


class SessionRequest(BaseModel):
    view: str
    label: int


@dataclass
class _Session:
    session_id: str
    view_id: str
    label: int
    footprint: np.ndarray
    created_at: float
    last_access: float
    revision: int = 0
    result: MotionResult | None = None
    exports: list[str] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


def create_app(scene: Scene, export_root: str | Path | None = None, ttl_s: float = DEFAULT_TTL_S) -> FastAPI:
    """Build the session API around one loaded scene."""
    app = FastAPI(title="mvmotion authoring service")
    # the browser client is served as static files from a different origin
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, _Session] = {}
    sessions_lock = threading.Lock()
    label_maps: dict[str, np.ndarray] = {}
    export_base = Path(export_root) if export_root is not None else None

    def _purge() -> None:
        now = time.monotonic()
        with sessions_lock:
            dead = [sid for sid, s in sessions.items() if now - s.last_access > ttl_s]
            for sid in dead:
                del sessions[sid]

    def _session(sid: str) -> _Session:
        _purge()
        with sessions_lock:
            session = sessions.get(sid)
            if session is None:
                raise HTTPException(status_code=404, detail=f"unknown session {sid}")
            session.last_access = time.monotonic()
            return session

    def _label_map(view_id: str) -> np.ndarray:
        if view_id not in label_maps:
            label_maps[view_id] = label_raster(scene, scene.view(view_id))
        return label_maps[view_id]

    @app.get("/scene")
    def get_scene() -> dict[str, Any]:
        return {
            "name": scene.meta.name,
            "labels": scene.labels(),
            "views": [
                {
                    "view_id": v.view_id,
                    "width": v.width,
                    "height": v.height,
                    "thumbnail": _thumbnail(v.image),
                }
                for v in scene.views
            ],
        }

    @app.get("/scene/view/{view_id}/image")
    def get_view_image(view_id: str) -> dict[str, Any]:
        try:
            view = scene.view(view_id)
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return {"view_id": view_id, "image": _png_data_uri(view.image)}

    @app.get("/scene/pick")
    def pick(view: str, x: int, y: int) -> dict[str, Any]:
        try:
            cam = scene.view(view)
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        if not (0 <= x < cam.width and 0 <= y < cam.height):
            raise HTTPException(status_code=422, detail=f"pixel ({x}, {y}) outside raster")
        label = int(_label_map(view)[y, x])
        return {"view": view, "x": x, "y": y, "label": None if label < 0 else label}

    @app.post("/session")
    def create_session(req: SessionRequest) -> dict[str, Any]:
        _purge()
        try:
            view = scene.view(req.view)
            footprint = object_footprint(scene, view, req.label)
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        sid = uuid.uuid4().hex
        now = time.monotonic()
        session = _Session(
            session_id=sid,
            view_id=req.view,
            label=req.label,
            footprint=footprint,
            created_at=now,
            last_access=now,
        )
        with sessions_lock:
            sessions[sid] = session
        return {
            "session_id": sid,
            "view": req.view,
            "label": req.label,
            "width": view.width,
            "height": view.height,
            "footprint": _png_data_uri(footprint.astype(np.uint8) * 255),
        }

    @app.post("/session/{sid}/motion")
    def post_motion(sid: str, payload: dict = Body(...)) -> dict[str, Any]:
        session = _session(sid)
        try:
            motion = parse_motion_spec(payload)
            if motion.reference_view != session.view_id:
                raise ValidationError(
                    f"motion reference_view {motion.reference_view!r} does not match "
                    f"session view {session.view_id!r}"
                )
            with session.lock:
                result = estimate_motion_flows(scene, session.label, motion)
                session.result = result
                session.revision += 1
                revision = session.revision
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except _CLIENT_FAULTS as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        warped = warped_previews(scene, result)
        previews = {
            vid: {
                "flow": _png_data_uri(colorize_flow(result.flows[vid])),
                "warped": _png_data_uri(warped[vid]),
            }
            for vid in sorted(result.flows)
        }
        return {"session_id": sid, "revision": revision, "derived": result.derived, "previews": previews}

    @app.post("/session/{sid}/export")
    def post_export(sid: str, payload: dict | None = Body(default=None)) -> dict[str, Any]:
        session = _session(sid)
        with session.lock:
            if session.result is None:
                raise HTTPException(status_code=409, detail="no motion applied in this session yet")
            if export_base is None:
                raise HTTPException(status_code=409, detail="service started without an export directory")
            name = f"rev{session.revision:03d}"
            if payload and "name" in payload:
                name = str(payload["name"])
                if not name.replace("-", "").replace("_", "").isalnum():
                    raise HTTPException(status_code=422, detail=f"invalid export name {name!r}")
            out_dir = export_base / sid / name
            manifest = write_flow_set(session.result, out_dir)
            session.exports.append(str(out_dir))
        return {
            "session_id": sid,
            "out_dir": str(out_dir),
            "manifest": manifest,
            "files": sorted(p.name for p in out_dir.iterdir()),
        }

    @app.get("/session/{sid}/state")
    def get_state(sid: str) -> dict[str, Any]:
        session = _session(sid)
        return {
            "session_id": sid,
            "view": session.view_id,
            "label": session.label,
            "revision": session.revision,
            "has_motion": session.result is not None,
            "derived": session.result.derived if session.result else None,
            "exports": session.exports,
            "age_s": time.monotonic() - session.created_at,
        }

    return app
