"""HTTP annotation service.

Volumes are uploaded in the container format and kept in memory; each
annotation session walks a forward-only state machine

    LOADED -> ROI_SET -> THRESHOLD_SET -> PROPAGATED

where re-posting an earlier step resets everything downstream.  All
segmentation math is delegated to the engine module, so a mask fetched over
HTTP is byte-identical to one computed in-process.  Preview is read-only:
it never advances or mutates the session.
"""
from __future__ import annotations

import io
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from pydantic import BaseModel
from PIL import Image

from . import engine, store
from .errors import StoreError, ValidationError
from .geometry import PolygonRoi, mask_area, rasterize_polygon
from .volume import central_slice_index, normalize_slice

DEFAULT_MAX_UPLOAD_BYTES = 512 * 1024 * 1024


class SessionState(str, Enum):
    LOADED = "LOADED"
    ROI_SET = "ROI_SET"
    THRESHOLD_SET = "THRESHOLD_SET"
    PROPAGATED = "PROPAGATED"


_STATE_ORDER = {
    SessionState.LOADED: 0,
    SessionState.ROI_SET: 1,
    SessionState.THRESHOLD_SET: 2,
    SessionState.PROPAGATED: 3,
}


@dataclass
class _Session:
    session_id: str
    volume_id: str
    reader_id: str
    created_at: str
    state: SessionState = SessionState.LOADED
    polygon: PolygonRoi | None = None
    roi_mask: np.ndarray | None = None
    central_norm: np.ndarray | None = None  # cached for preview
    central_threshold: float | None = None
    reference_area_px: int | None = None
    result: engine.DenseMask | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


class CreateSessionBody(BaseModel):
    volume_id: str
    reader_id: str = "anonymous"


class RoiBody(BaseModel):
    vertices: list[list[float]]
    annotated_slice: int | None = None


class ThresholdBody(BaseModel):
    t: float


class PropagateBody(BaseModel):
    workers: int = 1


def _rle_payload(mask: np.ndarray) -> dict:
    return {
        "rows": int(mask.shape[0]),
        "cols": int(mask.shape[1]),
        "runs": store.encode_rle(mask),
    }


def create_app(
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD_BYTES, ui_dir: str | None = None
) -> FastAPI:
    app = FastAPI(title="dbtmask annotation service")
    volumes: dict[str, store.VolumeContainer] = {}
    sessions: dict[str, _Session] = {}
    app.state.volumes = volumes
    app.state.sessions = sessions

    def get_volume(volume_id: str) -> store.VolumeContainer:
        if volume_id not in volumes:
            raise HTTPException(404, f"unknown volume {volume_id!r}")
        return volumes[volume_id]

    def get_session(session_id: str) -> _Session:
        if session_id not in sessions:
            raise HTTPException(404, f"unknown session {session_id!r}")
        return sessions[session_id]

    def acquire(ses: _Session) -> None:
        if not ses.lock.acquire(blocking=False):
            raise HTTPException(409, "session is busy with another mutation")

    @app.post("/volumes")
    async def upload_volume(request: Request):
        length = request.headers.get("content-length")
        if length is not None and int(length) > max_upload_bytes:
            raise HTTPException(413, f"upload exceeds {max_upload_bytes} bytes")
        data = await request.body()
        if len(data) > max_upload_bytes:
            raise HTTPException(413, f"upload exceeds {max_upload_bytes} bytes")
        try:
            container = store.read_volume(io.BytesIO(data))
        except StoreError as exc:
            raise HTTPException(400, str(exc))
        volume_id = uuid.uuid4().hex[:12]
        volumes[volume_id] = container
        vol = container.volume
        return {
            "volume_id": volume_id,
            "n_slices": vol.n_slices,
            "central_index": central_slice_index(vol),
            "rows": vol.rows,
            "cols": vol.cols,
        }

    @app.get("/volumes/{volume_id}/slices/{slice_index}")
    def render_slice(volume_id: str, slice_index: int, window: str = "minmax"):
        vol = get_volume(volume_id).volume
        if window != "minmax":
            raise HTTPException(422, f"unsupported window {window!r}")
        if not (0 <= slice_index < vol.n_slices):
            raise HTTPException(
                416, f"slice {slice_index} out of range [0, {vol.n_slices})"
            )
        norm = normalize_slice(vol, slice_index)
        gray = np.round(norm * 255.0).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(gray, mode="L").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        get_volume(body.volume_id)
        session_id = uuid.uuid4().hex[:12]
        sessions[session_id] = _Session(
            session_id=session_id,
            volume_id=body.volume_id,
            reader_id=body.reader_id,
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        return {"session_id": session_id, "state": SessionState.LOADED.value}

    @app.get("/sessions/{session_id}")
    def session_snapshot(session_id: str):
        ses = get_session(session_id)
        vol = get_volume(ses.volume_id).volume
        snap = {
            "session_id": ses.session_id,
            "volume_id": ses.volume_id,
            "reader_id": ses.reader_id,
            "created_at": ses.created_at,
            "state": ses.state.value,
            "central_index": central_slice_index(vol),
            "vertices": [list(v) for v in ses.polygon.vertices] if ses.polygon else None,
            "roi_area_px": (
                int(np.count_nonzero(ses.roi_mask)) if ses.roi_mask is not None else None
            ),
            "central_threshold": ses.central_threshold,
            "reference_area_px": ses.reference_area_px,
        }
        if ses.result is not None:
            snap["per_slice"] = [
                {"s": s, "t_s": ses.result.slice_thresholds[s], "area_px": ses.result.slice_areas_px[s]}
                for s in range(ses.result.n_slices)
            ]
            roi_px = int(np.count_nonzero(ses.roi_mask))
            total = int(sum(ses.result.slice_areas_px))
            snap["percent_density"] = total / (roi_px * ses.result.n_slices)
        return snap

    @app.post("/sessions/{session_id}/roi")
    def set_roi(session_id: str, body: RoiBody):
        ses = get_session(session_id)
        vol = get_volume(ses.volume_id).volume
        central = central_slice_index(vol)
        annotated = body.annotated_slice if body.annotated_slice is not None else central
        if annotated != central:
            raise HTTPException(
                422, f"annotation must be on the central slice {central}, got {annotated}"
            )
        for k, pair in enumerate(body.vertices):
            if len(pair) != 2:
                raise HTTPException(422, f"vertex {k} needs 2 coordinates, got {len(pair)}")
        acquire(ses)
        try:
            try:
                polygon = PolygonRoi(
                    vertices=tuple((p[0], p[1]) for p in body.vertices),
                    annotated_slice=annotated,
                )
                roi_mask = rasterize_polygon(polygon, vol.rows, vol.cols)
                if not roi_mask.any():
                    raise ValidationError("ROI rasterizes to zero pixels")
            except ValidationError as exc:
                raise HTTPException(422, str(exc))
            ses.polygon = polygon
            ses.roi_mask = roi_mask
            ses.central_norm = normalize_slice(vol, central)
            ses.central_threshold = None
            ses.reference_area_px = None
            ses.result = None
            ses.state = SessionState.ROI_SET
        finally:
            ses.lock.release()
        px, mm2 = mask_area(roi_mask, vol.pixel_spacing_mm)
        return {"roi_area_px": px, "roi_area_mm2": mm2}

    @app.get("/sessions/{session_id}/preview")
    def preview(session_id: str, t: float):
        ses = get_session(session_id)
        if _STATE_ORDER[ses.state] < _STATE_ORDER[SessionState.ROI_SET]:
            raise HTTPException(409, "no ROI set; draw a polygon before previewing")
        if not (0.0 <= t <= 1.0):
            raise HTTPException(422, f"threshold must be in [0, 1], got {t}")
        vol = get_volume(ses.volume_id).volume
        mask = engine.segment_slice(ses.central_norm, ses.roi_mask, t)
        px, mm2 = mask_area(mask, vol.pixel_spacing_mm)
        return {"area_px": px, "area_mm2": mm2, "mask_rle_central": _rle_payload(mask)}

    @app.post("/sessions/{session_id}/threshold")
    def set_threshold(session_id: str, body: ThresholdBody):
        ses = get_session(session_id)
        if _STATE_ORDER[ses.state] < _STATE_ORDER[SessionState.ROI_SET]:
            raise HTTPException(409, "no ROI set; draw a polygon before committing")
        if not (0.0 <= body.t <= 1.0):
            raise HTTPException(422, f"threshold must be in [0, 1], got {body.t}")
        vol = get_volume(ses.volume_id).volume
        acquire(ses)
        try:
            mask = engine.segment_slice(ses.central_norm, ses.roi_mask, body.t)
            ses.central_threshold = float(body.t)
            ses.reference_area_px = int(np.count_nonzero(mask))
            ses.result = None
            ses.state = SessionState.THRESHOLD_SET
        finally:
            ses.lock.release()
        px, mm2 = mask_area(mask, vol.pixel_spacing_mm)
        return {"reference_area_px": px, "reference_area_mm2": mm2}

    @app.post("/sessions/{session_id}/propagate")
    def run_propagation(session_id: str, body: PropagateBody | None = None):
        ses = get_session(session_id)
        if _STATE_ORDER[ses.state] < _STATE_ORDER[SessionState.THRESHOLD_SET]:
            raise HTTPException(409, "no committed threshold; commit one before propagating")
        vol = get_volume(ses.volume_id).volume
        workers = body.workers if body is not None else 1
        acquire(ses)
        try:
            try:
                annotation = engine.make_annotation(vol, ses.polygon, ses.central_threshold)
                result = engine.propagate(vol, annotation, workers=workers)
            except ValidationError as exc:
                raise HTTPException(500, str(exc))
            ses.result = result
            ses.state = SessionState.PROPAGATED
        finally:
            ses.lock.release()
        measurements = engine.measure(result, ses.roi_mask, vol.pixel_spacing_mm)
        return {
            "per_slice": [
                {"s": s, "t_s": result.slice_thresholds[s], "area_px": result.slice_areas_px[s]}
                for s in range(result.n_slices)
            ],
            "percent_density": measurements.percent_density,
        }

    @app.get("/sessions/{session_id}/mask/{slice_index}")
    def mask_slice(session_id: str, slice_index: int):
        ses = get_session(session_id)
        if ses.state is not SessionState.PROPAGATED:
            raise HTTPException(409, "no propagated mask on this session")
        if not (0 <= slice_index < ses.result.n_slices):
            raise HTTPException(
                416, f"slice {slice_index} out of range [0, {ses.result.n_slices})"
            )
        return _rle_payload(ses.result.slices[slice_index])

    def _session_record(ses: _Session) -> store.SessionRecord:
        thresholds = areas = None
        if ses.result is not None:
            thresholds = ses.result.slice_thresholds
            areas = ses.result.slice_areas_px
        return store.SessionRecord(
            reader_id=ses.reader_id,
            volume_ref=ses.volume_id,
            annotated_slice=ses.polygon.annotated_slice,
            vertices=ses.polygon.vertices,
            central_threshold=ses.central_threshold,
            timestamp=ses.created_at,
            slice_thresholds=thresholds,
            slice_areas_px=areas,
        )

    @app.get("/sessions/{session_id}/export/session")
    def export_session(session_id: str):
        ses = get_session(session_id)
        if _STATE_ORDER[ses.state] < _STATE_ORDER[SessionState.THRESHOLD_SET]:
            raise HTTPException(409, "nothing to export before a threshold is committed")
        buf = io.BytesIO()
        store.write_session(_session_record(ses), buf)
        return Response(content=buf.getvalue(), media_type="text/plain; charset=utf-8")

    @app.get("/sessions/{session_id}/export/mask")
    def export_mask(session_id: str):
        ses = get_session(session_id)
        if ses.state is not SessionState.PROPAGATED:
            raise HTTPException(409, "no propagated mask on this session")
        buf = io.BytesIO()
        store.write_mask(ses.result, buf)
        return Response(content=buf.getvalue(), media_type="application/octet-stream")

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
