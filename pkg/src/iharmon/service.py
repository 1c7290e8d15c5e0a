"""HTTP facade over the inference pipeline.

Inference endpoints are stateless: every request carries its own images.
A small in-memory session store exists for clients that iterate on one
upload; it never influences inference results.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, Response, UploadFile
from fastapi.middleware.cors import CORSMiddleware

from .imaging import EmptyRegionError
from .imgio import decode_image, decode_mask, encode_png
from .inference import BlendRatios, HarmonizeRequest, color_transfer, harmonize
from .model import ModelBundle, load_bundle

__all__ = ["create_app", "MAX_UPLOAD_BYTES", "MAX_DIMENSION"]

log = logging.getLogger(__name__)

MAX_UPLOAD_BYTES = 32 * 1024 * 1024
MAX_DIMENSION = 4096
SESSION_TTL_SECONDS = 1800.0


@dataclass
class SessionRecord:
    session_id: str
    composite: np.ndarray
    fg_mask: np.ndarray | None = None
    guide_mask: np.ndarray | None = None
    created_at: float = field(default_factory=time.time)
    touched_at: float = field(default_factory=time.time)


class SessionStore:
    def __init__(self, ttl: float = SESSION_TTL_SECONDS):
        self.ttl = ttl
        self._lock = threading.Lock()
        self._records: dict[str, SessionRecord] = {}

    def _sweep(self, now: float) -> None:
        dead = [sid for sid, rec in self._records.items() if now - rec.touched_at > self.ttl]
        for sid in dead:
            del self._records[sid]

    def create(self, composite: np.ndarray) -> SessionRecord:
        with self._lock:
            now = time.time()
            self._sweep(now)
            rec = SessionRecord(session_id=uuid.uuid4().hex, composite=composite)
            self._records[rec.session_id] = rec
            return rec

    def get(self, sid: str) -> SessionRecord | None:
        with self._lock:
            now = time.time()
            self._sweep(now)
            rec = self._records.get(sid)
            if rec:
                rec.touched_at = now
            return rec

    def drop(self, sid: str) -> bool:
        with self._lock:
            return self._records.pop(sid, None) is not None


async def _read_limited(parts: list[UploadFile | None]) -> list[bytes | None]:
    blobs: list[bytes | None] = []
    total = 0
    for part in parts:
        if part is None:
            blobs.append(None)
            continue
        data = await part.read()
        total += len(data)
        if total > MAX_UPLOAD_BYTES:
            raise HTTPException(status_code=400, detail="upload exceeds 32 MB limit")
        blobs.append(data)
    return blobs


def _decode_composite(data: bytes) -> np.ndarray:
    try:
        img = decode_image(data)
    except Exception as exc:
        raise HTTPException(status_code=400, detail=f"malformed composite: {exc}") from exc
    if max(img.shape[:2]) > MAX_DIMENSION:
        raise HTTPException(status_code=400, detail=f"image side exceeds {MAX_DIMENSION}px")
    return img


def _decode_mask_bytes(data: bytes, name: str) -> np.ndarray:
    try:
        return decode_mask(data)
    except Exception as exc:
        raise HTTPException(status_code=400, detail=f"malformed {name}: {exc}") from exc


def _build_request(
    composite: np.ndarray, fg_mask: np.ndarray, guide_mask: np.ndarray | None
) -> HarmonizeRequest:
    req = HarmonizeRequest(composite=composite, fg_mask=fg_mask, guide_mask=guide_mask)
    try:
        req.validate()
    except (EmptyRegionError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return req


def _png_response(image: np.ndarray, meta: dict) -> Response:
    return Response(
        content=encode_png(image),
        media_type="image/png",
        headers={"X-Result-Meta": json.dumps(meta, sort_keys=True)},
    )


def create_app(
    weights: str | None = None,
    color_weights: str | None = None,
    workers: int = 2,
    session_ttl: float = SESSION_TTL_SECONDS,
) -> FastAPI:
    app = FastAPI(title="interactive harmonization service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["X-Result-Meta"],
    )

    bundle: ModelBundle | None = load_bundle(weights) if weights else None
    # without a dedicated color model, its encoder doubles as the color encoder
    color: ModelBundle | None = (
        load_bundle(color_weights) if color_weights else bundle
    )
    gate = threading.Semaphore(max(1, workers))
    sessions = SessionStore(ttl=session_ttl)

    def _require_bundle() -> ModelBundle:
        if bundle is None:
            raise HTTPException(status_code=503, detail="model weights not loaded")
        return bundle

    @app.get("/api/health")
    def health() -> dict:
        return {
            "status": "ok",
            "weights_loaded": bundle is not None,
            "model_config_hash": bundle.config.hash() if bundle is not None else None,
        }

    def _require_parts(**parts: UploadFile | None) -> None:
        missing = [name for name, part in parts.items() if part is None]
        if missing:
            raise HTTPException(status_code=400, detail=f"missing part(s): {', '.join(missing)}")

    @app.post("/api/harmonize")
    async def harmonize_endpoint(
        composite: UploadFile | None = File(None),
        fg_mask: UploadFile | None = File(None),
        guide_mask: UploadFile | None = File(None),
    ) -> Response:
        model = _require_bundle()
        _require_parts(composite=composite, fg_mask=fg_mask)
        comp_b, fg_b, guide_b = await _read_limited([composite, fg_mask, guide_mask])
        comp = _decode_composite(comp_b)
        fg = _decode_mask_bytes(fg_b, "fg_mask")
        guide = _decode_mask_bytes(guide_b, "guide_mask") if guide_b is not None else None
        req = _build_request(comp, fg, guide)
        started = time.perf_counter()
        with gate:
            try:
                result = harmonize(req, model)
            except (EmptyRegionError, ValueError) as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
        latency_ms = (time.perf_counter() - started) * 1000.0
        return _png_response(
            result.image,
            {"latency_ms": latency_ms, "used_default_reference": result.used_default_reference},
        )

    @app.post("/api/color_transfer")
    async def color_transfer_endpoint(
        composite: UploadFile | None = File(None),
        fg_mask: UploadFile | None = File(None),
        guide_mask: UploadFile | None = File(None),
        r1: float = Form(...),
        r2: float = Form(...),
    ) -> Response:
        model = _require_bundle()
        _require_parts(composite=composite, fg_mask=fg_mask)
        try:
            ratios = BlendRatios(r1=r1, r2=r2)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        comp_b, fg_b, guide_b = await _read_limited([composite, fg_mask, guide_mask])
        comp = _decode_composite(comp_b)
        fg = _decode_mask_bytes(fg_b, "fg_mask")
        guide = _decode_mask_bytes(guide_b, "guide_mask") if guide_b is not None else None
        req = _build_request(comp, fg, guide)
        started = time.perf_counter()
        with gate:
            try:
                result = color_transfer(req, ratios, model, color or model)
            except (EmptyRegionError, ValueError) as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
        latency_ms = (time.perf_counter() - started) * 1000.0
        return _png_response(
            result.image,
            {"latency_ms": latency_ms, "used_default_reference": result.used_default_reference},
        )

    @app.post("/api/session")
    async def create_session(composite: UploadFile = File(...)) -> dict:
        (comp_b,) = await _read_limited([composite])
        comp = _decode_composite(comp_b)
        rec = sessions.create(comp)
        return {"session_id": rec.session_id,
                "width": comp.shape[1], "height": comp.shape[0]}

    @app.get("/api/session/{sid}")
    def get_session(sid: str) -> dict:
        rec = sessions.get(sid)
        if rec is None:
            raise HTTPException(status_code=404, detail="unknown or expired session")
        return {
            "session_id": rec.session_id,
            "width": rec.composite.shape[1],
            "height": rec.composite.shape[0],
            "created_at": rec.created_at,
        }

    @app.delete("/api/session/{sid}")
    def delete_session(sid: str) -> dict:
        if not sessions.drop(sid):
            raise HTTPException(status_code=404, detail="unknown or expired session")
        return {"deleted": sid}

    @app.post("/api/debug/mask_echo")
    async def mask_echo(mask: UploadFile = File(...)) -> dict:
        """Reports exactly which pixels a client-exported mask selects.

        Clients verify round-trip fidelity by comparing this digest against
        one computed over their own raster (row-major uint8, 1 = selected).
        """
        (mask_b,) = await _read_limited([mask])
        decoded = _decode_mask_bytes(mask_b, "mask")
        binary = (decoded > 0.5).astype(np.uint8)
        return {
            "width": int(binary.shape[1]),
            "height": int(binary.shape[0]),
            "selected": int(binary.sum()),
            "digest": hashlib.sha256(binary.tobytes()).hexdigest(),
        }

    return app
