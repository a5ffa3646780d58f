"""HTTP inference service backing the interactive kernel explorer.

Endpoints:
    GET  /healthz                     liveness + build info
    GET  /models                      registered model manifests
    POST /volumes                     ingest a raw KSVOL1 payload -> volume_id
    GET  /volumes                     stored volume manifests
    GET  /volumes/{id}/slices/{k}     source slice as 16-bit PNG (HU + 1024)
    POST /convert                     convert one slice, returns PNG + metadata

Conversion responses carry the converted slice as a base64-encoded 16-bit
grayscale PNG with HU offset-encoded (pixel = HU + 1024) plus {alpha, beta,
model_id, duration_ms}. Validation failures are 400, unknown ids are 404, a
source-coordinate/mode mismatch is 422, internal failures are 500 with a
diagnostic id.
"""

from __future__ import annotations

import base64
import io
import logging
import time
import uuid

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .data import HU_MIN, export_slice_png
from .errors import FormatError, UnsupportedModeError
from .inference import convert_slices
from .store import Store

log = logging.getLogger("kshift.service")


class ConversionRequest(BaseModel):
    volume_id: str
    slice_index: int
    beta: float
    alpha: float | None = None
    model_id: str
    window_center: float | None = None
    window_width: float | None = None


def _png_bytes(slice_hu: np.ndarray) -> bytes:
    buf = io.BytesIO()
    export_slice_png(slice_hu, buf)
    return buf.getvalue()


def create_app(store: Store) -> FastAPI:
    app = FastAPI(title="kshift", version=__version__)

    def error(status: int, message: str):
        return JSONResponse(status_code=status, content={"error": message})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "service": "kshift", "version": __version__}

    @app.get("/models")
    def models():
        return {"models": store.list_models()}

    @app.get("/volumes")
    def volumes():
        return {"volumes": store.list_volumes()}

    @app.post("/volumes")
    async def ingest(request: Request):
        payload = await request.body()
        try:
            volume_id = store.ingest_volume(payload)
        except FormatError as exc:
            return error(400, f"invalid volume payload: {exc}")
        return {"volume_id": volume_id}

    @app.get("/volumes/{volume_id}/slices/{index}")
    def slice_png(volume_id: str, index: int):
        try:
            record = store.get_volume(volume_id)
        except KeyError:
            return error(404, f"unknown volume {volume_id}")
        if not 0 <= index < record.n_slices:
            return error(400, f"slice index {index} out of range")
        return Response(content=_png_bytes(record.slices[index]), media_type="image/png")

    @app.post("/convert")
    def convert(req: ConversionRequest):
        if not 0.0 <= req.beta <= 1.0:
            return error(400, f"beta must lie in [0, 1], got {req.beta}")
        if req.alpha is not None and not 0.0 <= req.alpha <= 1.0:
            return error(400, f"alpha must lie in [0, 1], got {req.alpha}")
        if req.window_width is not None and req.window_width <= 0:
            return error(400, "window_width must be positive")
        try:
            record = store.get_volume(req.volume_id)
        except KeyError:
            return error(404, f"unknown volume {req.volume_id}")
        try:
            bundle = store.load_model(req.model_id)
        except KeyError:
            return error(404, f"unknown model {req.model_id}")
        if not 0 <= req.slice_index < record.n_slices:
            return error(400, f"slice index {req.slice_index} out of range")
        started = time.monotonic()
        try:
            converted = convert_slices(
                bundle, record.slices[req.slice_index], req.beta, req.alpha
            )
        except UnsupportedModeError as exc:
            return error(422, f"mode mismatch: {exc}")
        except Exception:  # pragma: no cover - defensive path
            diagnostic_id = uuid.uuid4().hex[:12]
            log.exception("conversion failed (diagnostic %s)", diagnostic_id)
            return error(500, f"internal failure, diagnostic id {diagnostic_id}")
        duration_ms = (time.monotonic() - started) * 1000.0
        log.info(
            "convert volume=%s slice=%d beta=%.2f duration=%.0fms",
            req.volume_id, req.slice_index, req.beta, duration_ms,
        )
        return {
            "alpha": req.alpha,
            "beta": req.beta,
            "model_id": req.model_id,
            "duration_ms": duration_ms,
            "width": int(converted.shape[1]),
            "height": int(converted.shape[0]),
            "hu_offset": -HU_MIN,
            "png_base64": base64.b64encode(_png_bytes(converted)).decode(),
        }

    return app
