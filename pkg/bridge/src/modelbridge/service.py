"""The HTTP service: four model endpoints plus health, one uniform protocol.

Requests and responses carry a mandatory protocol version; every response
echoes the request's correlation id and names the serving implementation.
Failures use the protocol error body {code, message} with codes
model_unavailable, oom, or invalid_payload.
"""

from __future__ import annotations

import time
from typing import Literal

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .codec import PayloadError, decode_image, encode_image
from .registry import ModelRegistry, reference_registry

PROTOCOL_VERSION = 1


class ImagePayload(BaseModel):
    format: Literal["png"]
    data: str
    width: int = Field(ge=1)
    height: int = Field(ge=1)


class BaseRequest(BaseModel):
    version: int
    request_id: str | None = None


class InpaintRequest(BaseRequest):
    image: ImagePayload
    mask: ImagePayload


class GroundRequest(BaseRequest):
    image: ImagePayload
    queries: list[str] = Field(min_length=1)
    max_boxes: int | None = Field(default=None, ge=1)


class EmbedRequest(BaseRequest):
    modality: Literal["image", "text"]
    image: ImagePayload | None = None
    text: str | None = None


class EditRequest(BaseRequest):
    image: ImagePayload
    instruction: str = Field(min_length=1)
    steps: int = Field(default=100, ge=1)
    seed: int = 0
    guidance: dict | None = None  # sampler/guidance settings, passed through


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(registry: ModelRegistry | None = None) -> FastAPI:
    registry = registry if registry is not None else reference_registry()
    app = FastAPI(title="modelbridge", version=PROTOCOL_VERSION.__str__())

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return _error(400, "invalid_payload", str(exc.errors()[:3]))

    @app.exception_handler(ServiceError)
    async def on_service_error(request: Request, exc: ServiceError):
        return _error(exc.status, exc.code, exc.message)

    def _entry(kind: str):
        entry = registry.get(kind)
        if entry is None:
            raise ServiceError(503, "model_unavailable", f"no {kind} model registered")
        return entry

    def _check_version(body: BaseRequest):
        if body.version != PROTOCOL_VERSION:
            raise ServiceError(
                400, "invalid_payload", f"unsupported protocol version {body.version}"
            )

    def _decode(payload: ImagePayload, as_mask: bool = False) -> np.ndarray:
        try:
            return decode_image(payload.model_dump(), as_mask=as_mask)
        except PayloadError as exc:
            raise ServiceError(400, "invalid_payload", str(exc)) from exc

    def _run(entry, fn, *args, **kwargs):
        with entry.acquire():
            try:
                return fn(*args, **kwargs)
            except MemoryError as exc:
                raise ServiceError(507, "oom", f"{entry.kind} model ran out of memory") from exc

    def _respond(kind: str, entry, body: BaseRequest, started: float, payload: dict) -> dict:
        out = {
            "version": PROTOCOL_VERSION,
            "kind": kind,
            "request_id": body.request_id,
            "backend_id": f"bridge:{entry.impl_id}",
            "latency_ms": (time.monotonic() - started) * 1000.0,
            "metadata": {"device": entry.device, "deterministic": True},
        }
        out.update(payload)
        return out

    @app.post("/v1/inpaint")
    def handle_inpaint(body: InpaintRequest):
        _check_version(body)
        entry = _entry("inpaint")
        started = time.monotonic()
        image = _decode(body.image)
        mask = _decode(body.mask, as_mask=True)
        if image.shape[:2] != mask.shape:
            raise ServiceError(400, "invalid_payload", "image and mask dimensions differ")
        result = _run(entry, entry.adapter.inpaint, image, mask)
        return _respond("inpaint", entry, body, started, {"image": encode_image(result)})

    @app.post("/v1/ground")
    def handle_ground(body: GroundRequest):
        _check_version(body)
        entry = _entry("ground")
        started = time.monotonic()
        image = _decode(body.image)
        height, width = image.shape[:2]
        raw = _run(entry, entry.adapter.ground, image, list(body.queries), body.max_boxes)
        boxes = []
        for label, box, score in raw:
            clipped = _clip(box, width, height)
            if clipped is None:
                continue
            boxes.append(
                {
                    "label": str(label),
                    "box": [float(v) for v in clipped],
                    "score": float(min(max(score, 0.0), 1.0)),
                }
            )
        return _respond("ground", entry, body, started, {"boxes": boxes})

    @app.post("/v1/embed")
    def handle_embed(body: EmbedRequest):
        _check_version(body)
        entry = _entry("embed")
        started = time.monotonic()
        if body.modality == "image":
            if body.image is None:
                raise ServiceError(400, "invalid_payload", "image modality needs an image")
            vector = _run(entry, entry.adapter.embed_image, _decode(body.image))
        else:
            if not body.text:
                raise ServiceError(400, "invalid_payload", "text modality needs text")
            vector = _run(entry, entry.adapter.embed_text, body.text)
        vector = np.asarray(vector, dtype=float).ravel()
        if not np.all(np.isfinite(vector)):
            raise ServiceError(503, "model_unavailable", "embedder produced non-finite values")
        return _respond(
            "embed", entry, body, started, {"vector": vector.tolist(), "dim": int(vector.size)}
        )

    @app.post("/v1/edit")
    def handle_edit(body: EditRequest):
        _check_version(body)
        entry = _entry("edit")
        started = time.monotonic()
        image = _decode(body.image)
        result = _run(
            entry,
            entry.adapter.edit,
            image,
            body.instruction,
            steps=body.steps,
            seed=body.seed,
            guidance=body.guidance,
        )
        return _respond("edit", entry, body, started, {"image": encode_image(np.asarray(result))})

    @app.get("/v1/health")
    def handle_health():
        return registry.health()

    return app


def _clip(box, width: int, height: int):
    x, y, w, h = (float(v) for v in box)
    x0, y0 = max(x, 0.0), max(y, 0.0)
    x1, y1 = min(x + w, float(width)), min(y + h, float(height))
    if x1 <= x0 or y1 <= y0:
        return None
    return (x0, y0, x1 - x0, y1 - y0)
