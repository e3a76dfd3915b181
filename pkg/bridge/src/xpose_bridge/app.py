"""FastAPI application implementing the /v1 generation wire protocol.

Requests are validated in three tiers: malformed JSON, base64, or field
types answer 400; structurally valid requests with out-of-range deltas
answer 422; everything answers 503 until the model finishes loading.  Model
calls are serialized behind a lock (single-accelerator assumption) and
chunked to the configured batch size.
"""

from __future__ import annotations

import base64
import contextlib
import io
import logging
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel, Field

from .config import BridgeConfig

logger = logging.getLogger(__name__)


class ViewSpec(BaseModel):
    d_azimuth_deg: float
    d_elevation_deg: float


class GenerateRequest(BaseModel):
    image_png_b64: str
    views: list[ViewSpec] = Field(min_length=1)
    steps: int = Field(ge=1, le=1000)
    seed: int


def _decode_image(text: str) -> np.ndarray:
    try:
        raw = base64.b64decode(text, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            return np.asarray(im.convert("RGB"))
    except Exception as exc:
        raise ValueError(f"image_png_b64 undecodable: {exc}") from None


def _encode_image(arr: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(arr, dtype=np.uint8)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def create_app(backend, config: BridgeConfig | None = None, defer_load=None) -> FastAPI:
    """Build the service around a model backend.

    ``defer_load`` (a threading.Event) delays loading until set, which tests
    use to observe the 503 loading state; without it the backend loads on a
    background thread at startup.
    """
    config = config or BridgeConfig()
    state = {"ready": False, "error": None}
    model_lock = threading.Lock()

    def load_model():
        if defer_load is not None:
            defer_load.wait()
        try:
            backend.load()
            state["ready"] = True
            logger.info("model ready: %s", backend.model_id)
        except Exception as exc:  # surface through /v1/health
            state["error"] = str(exc)
            logger.error("model load failed: %s", exc)

    @contextlib.asynccontextmanager
    async def lifespan(_app):
        threading.Thread(target=load_model, daemon=True).start()
        yield

    app = FastAPI(title="xpose-bridge", lifespan=lifespan)

    @app.exception_handler(RequestValidationError)
    def _validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors()[:3])})

    @app.get("/v1/health")
    def health():
        if state["error"]:
            return JSONResponse(status_code=503, content={"error": state["error"]})
        if not state["ready"]:
            return JSONResponse(status_code=503, content={"error": "model loading"})
        return {"status": "ok", "model": backend.model_id}

    @app.post("/v1/generate")
    def generate(request: GenerateRequest):
        if state["error"]:
            return JSONResponse(status_code=503, content={"error": state["error"]})
        if not state["ready"]:
            return JSONResponse(status_code=503, content={"error": "model loading"})
        for k, view in enumerate(request.views):
            if not -360.0 <= view.d_azimuth_deg <= 360.0:
                return JSONResponse(
                    status_code=422,
                    content={"error": f"views[{k}].d_azimuth_deg out of [-360, 360]"},
                )
            if not -90.0 <= view.d_elevation_deg <= 90.0:
                return JSONResponse(
                    status_code=422,
                    content={"error": f"views[{k}].d_elevation_deg out of [-90, 90]"},
                )
        try:
            image = _decode_image(request.image_png_b64)
        except ValueError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})

        # apply the convention remap before the model sees the deltas
        views = [
            (config.azimuth_sign * v.d_azimuth_deg, v.d_elevation_deg)
            for v in request.views
        ]
        images = []
        with model_lock:
            for start in range(0, len(views), config.max_batch):
                chunk = views[start : start + config.max_batch]
                images.extend(
                    backend.generate_views(image, chunk, request.steps, request.seed)
                )
        return {"images_png_b64": [_encode_image(im) for im in images]}

    app.state.config = config
    app.state.backend = backend
    return app
