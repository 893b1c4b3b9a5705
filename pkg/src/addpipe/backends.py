"""Model backend contracts: deterministic stubs and the remote bridge client.

Four kinds of call cross one uniform protocol: inpaint, ground, embed, edit.
Stubs are bit-deterministic so every pipeline property is testable offline;
the remote client speaks HTTP to a bridge service exposing the same
contracts at POST /v1/<kind>.

Images travel as base64-encoded PNG (lossless, required for the bit-exact
background checks) inside JSON bodies. Every request carries a protocol
version and a correlation id that the response must echo.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import numpy as np
from PIL import Image

from .errors import (
    BackendError,
    BackendTimeoutError,
    ProtocolError,
    RemoteError,
    ShapeMismatchError,
)

PROTOCOL_VERSION = 1
KINDS = ("inpaint", "ground", "embed", "edit")
DEFAULT_TIMEOUTS = {"inpaint": 30.0, "ground": 30.0, "embed": 30.0, "edit": 120.0}
DEFAULT_EDIT_STEPS = 100


@dataclass(frozen=True)
class DetectedBox:
    """One grounding hit: queried label, (x, y, w, h) box, confidence."""

    label: str
    box: tuple[float, float, float, float]
    score: float


# ---------------------------------------------------------------------------
# image payload codec

def encode_image_payload(arr: np.ndarray) -> dict:
    """uint8 image or bool mask -> {"format": "png", "data": b64, "width", "height"}."""
    arr = np.asarray(arr)
    if arr.dtype == bool:
        pil = Image.fromarray(arr.astype(np.uint8) * 255, mode="L")
    elif arr.ndim == 2:
        pil = Image.fromarray(arr.astype(np.uint8), mode="L")
    else:
        pil = Image.fromarray(arr.astype(np.uint8), mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return {
        "format": "png",
        "data": base64.b64encode(buf.getvalue()).decode("ascii"),
        "width": int(arr.shape[1]),
        "height": int(arr.shape[0]),
    }


def decode_image_payload(payload: dict, as_mask: bool = False) -> np.ndarray:
    """Inverse of encode_image_payload; validates dimensions against the header."""
    if not isinstance(payload, dict):
        raise ProtocolError(f"image payload must be an object, got {type(payload).__name__}")
    if payload.get("format") != "png":
        raise ProtocolError(f"unsupported image format {payload.get('format')!r}")
    try:
        raw = base64.b64decode(payload["data"], validate=True)
        pil = Image.open(io.BytesIO(raw))
        pil.load()
    except Exception as exc:
        raise ProtocolError(f"undecodable image payload: {exc}") from exc
    arr = np.asarray(pil)
    if arr.shape[0] != payload.get("height") or arr.shape[1] != payload.get("width"):
        raise ProtocolError(
            f"payload header {payload.get('width')}x{payload.get('height')} "
            f"does not match decoded {arr.shape[1]}x{arr.shape[0]}"
        )
    if as_mask:
        if arr.ndim != 2:
            arr = arr[..., 0]
        return arr > 127
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    return arr[..., :3].astype(np.uint8)


# ---------------------------------------------------------------------------
# stub backends

def stub_inpaint(image: np.ndarray, mask: np.ndarray, fill: str = "mean", seed: int = 0) -> np.ndarray:
    """Deterministic inpainting double.

    Masked pixels become the image's per-channel mean color (or seeded noise
    with fill="noise"); unmasked pixels are returned bit-exact.
    """
    image = np.asarray(image)
    mask = np.asarray(mask, dtype=bool)
    if image.shape[:2] != mask.shape:
        raise ShapeMismatchError(f"image {image.shape[:2]} vs mask {mask.shape}")
    out = image.copy()
    if not mask.any():
        return out
    if fill == "noise":
        rng = np.random.default_rng(seed)
        out[mask] = rng.integers(0, 256, size=(int(mask.sum()), image.shape[2]), dtype=np.uint8)
    else:
        mean_color = np.round(image.reshape(-1, image.shape[2]).mean(axis=0)).astype(np.uint8)
        out[mask] = mean_color
    return out


def clip_box(box, width: int, height: int) -> tuple[float, float, float, float] | None:
    """Intersect an (x, y, w, h) box with the image; None when nothing remains."""
    x, y, w, h = (float(v) for v in box)
    x0, y0 = max(x, 0.0), max(y, 0.0)
    x1, y1 = min(x + w, float(width)), min(y + h, float(height))
    if x1 <= x0 or y1 <= y0:
        return None
    return (x0, y0, x1 - x0, y1 - y0)


def stub_ground(
    image: np.ndarray, queries: list[str], fixtures: list[DetectedBox]
) -> list[DetectedBox]:
    """Fixture-driven grounding double.

    Returns the fixture boxes whose label is queried, clipped to the image.
    """
    height, width = np.asarray(image).shape[:2]
    wanted = set(queries)
    out = []
    for fx in fixtures:
        if fx.label not in wanted:
            continue
        clipped = clip_box(fx.box, width, height)
        if clipped is None:
            continue
        out.append(DetectedBox(label=fx.label, box=clipped, score=float(fx.score)))
    return out


def stub_embed(payload, dim: int = 64) -> np.ndarray:
    """Content-hash seeded unit vector; identical payloads embed identically."""
    if isinstance(payload, str):
        material = payload.encode("utf-8")
    else:
        arr = np.ascontiguousarray(np.asarray(payload))
        material = arr.tobytes() + str(arr.shape).encode()
    seed = int.from_bytes(hashlib.sha256(material).digest()[:8], "little")
    vec = np.random.default_rng(seed).standard_normal(dim)
    return vec / np.linalg.norm(vec)


def stub_edit(image: np.ndarray, instruction: str, steps: int = DEFAULT_EDIT_STEPS, seed: int = 0) -> np.ndarray:
    """Editing double: stamps a deterministic colored patch onto the image.

    The patch position, size, and color derive from (image content,
    instruction, seed), standing in for an added object.
    """
    image = np.asarray(image)
    h, w = image.shape[:2]
    material = image.tobytes() + instruction.encode("utf-8") + str(int(seed)).encode()
    rng = np.random.default_rng(int.from_bytes(hashlib.sha256(material).digest()[:8], "little"))
    ph = max(2, int(rng.integers(h // 8 + 1, max(h // 3, h // 8 + 2))))
    pw = max(2, int(rng.integers(w // 8 + 1, max(w // 3, w // 8 + 2))))
    top = int(rng.integers(0, h - ph + 1))
    left = int(rng.integers(0, w - pw + 1))
    color = rng.integers(0, 256, size=3, dtype=np.uint8)
    out = image.copy()
    out[top : top + ph, left : left + pw] = color
    return out


class StubInpainter:
    backend_id = "stub-inpaint"

    def __init__(self, fill: str = "mean", seed: int = 0):
        self.fill = fill
        self.seed = seed

    def inpaint(self, image, mask):
        return stub_inpaint(image, mask, fill=self.fill, seed=self.seed)


class StubGrounder:
    """Serves fixture boxes keyed by image name, with a "*" wildcard entry."""

    backend_id = "stub-ground"

    def __init__(self, fixtures: dict[str, list[DetectedBox]] | None = None):
        self.fixtures = fixtures or {}

    @classmethod
    def from_file(cls, path) -> "StubGrounder":
        raw = json.loads(Path(path).read_text())
        fixtures = {}
        for key, boxes in raw.items():
            fixtures[key] = [
                DetectedBox(label=b["label"], box=tuple(b["box"]), score=float(b["score"]))
                for b in boxes
            ]
        return cls(fixtures)

    def ground(self, image, queries, max_boxes: int | None = None, key: str | None = None):
        if key is not None and key in self.fixtures:
            boxes = self.fixtures[key]
        else:
            boxes = self.fixtures.get("*", [])
        hits = stub_ground(image, queries, boxes)
        hits.sort(key=lambda b: -b.score)
        if max_boxes is not None:
            hits = hits[:max_boxes]
        return hits


class StubEmbedder:
    backend_id = "stub-embed"

    def __init__(self, dim: int = 64):
        self.dim = dim

    def embed_image(self, image):
        return stub_embed(image, dim=self.dim)

    def embed_text(self, text: str):
        return stub_embed(text, dim=self.dim)


class StubEditor:
    backend_id = "stub-edit"

    def edit(self, image, instruction, steps: int = DEFAULT_EDIT_STEPS, seed: int = 0, guidance=None):
        return stub_edit(image, instruction, steps=steps, seed=seed)


# ---------------------------------------------------------------------------
# wire protocol

@dataclass
class BackendRequest:
    kind: str
    image: np.ndarray | None = None
    mask: np.ndarray | None = None
    queries: list[str] | None = None
    max_boxes: int | None = None
    modality: str | None = None
    text: str | None = None
    instruction: str | None = None
    steps: int = DEFAULT_EDIT_STEPS
    seed: int = 0
    guidance: dict | None = None  # opaque pass-through for the bridge
    request_id: str = field(default_factory=lambda: uuid.uuid4().hex)

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ProtocolError(f"unknown request kind {self.kind!r}")
        if self.kind == "inpaint":
            if self.image is None or self.mask is None:
                raise ProtocolError("inpaint request needs image and mask")
            if np.asarray(self.image).shape[:2] != np.asarray(self.mask).shape:
                raise ShapeMismatchError("inpaint image and mask dimensions differ")
        elif self.kind == "ground":
            if self.image is None or not self.queries:
                raise ProtocolError("ground request needs image and queries")
        elif self.kind == "embed":
            if self.modality not in ("image", "text"):
                raise ProtocolError(f"embed modality must be image or text, got {self.modality!r}")
            if self.modality == "image" and self.image is None:
                raise ProtocolError("embed image request needs an image")
            if self.modality == "text" and not self.text:
                raise ProtocolError("embed text request needs text")
        elif self.kind == "edit":
            if self.image is None or not self.instruction:
                raise ProtocolError("edit request needs image and instruction")
            if self.steps < 1:
                raise ProtocolError(f"edit steps must be >= 1, got {self.steps}")

    def to_wire(self) -> dict:
        self.validate()
        body: dict = {"version": PROTOCOL_VERSION, "request_id": self.request_id}
        if self.image is not None:
            body["image"] = encode_image_payload(self.image)
        if self.kind == "inpaint":
            body["mask"] = encode_image_payload(np.asarray(self.mask, dtype=bool))
        elif self.kind == "ground":
            body["queries"] = list(self.queries)
            if self.max_boxes is not None:
                body["max_boxes"] = int(self.max_boxes)
        elif self.kind == "embed":
            body["modality"] = self.modality
            if self.modality == "text":
                body["text"] = self.text
        elif self.kind == "edit":
            body["instruction"] = self.instruction
            body["steps"] = int(self.steps)
            body["seed"] = int(self.seed)
            if self.guidance is not None:
                body["guidance"] = self.guidance
        return body


@dataclass
class BackendResponse:
    kind: str
    backend_id: str
    request_id: str | None = None
    image: np.ndarray | None = None
    boxes: list[DetectedBox] | None = None
    vector: np.ndarray | None = None
    latency_ms: float = 0.0
    attempts: int = 1
    metadata: dict = field(default_factory=dict)


def parse_response(kind: str, body: dict, request_id: str | None = None) -> BackendResponse:
    """Validate a wire response body against the kind's contract."""
    if not isinstance(body, dict):
        raise ProtocolError("response body must be an object")
    if body.get("version") != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {body.get('version')!r}")
    if body.get("kind") != kind:
        raise ProtocolError(f"response kind {body.get('kind')!r} does not match request {kind!r}")
    if request_id is not None and body.get("request_id") != request_id:
        raise ProtocolError("response correlation id does not match request")
    backend_id = body.get("backend_id")
    if not isinstance(backend_id, str) or not backend_id:
        raise ProtocolError("response missing backend_id")
    resp = BackendResponse(
        kind=kind,
        backend_id=backend_id,
        request_id=body.get("request_id"),
        latency_ms=float(body.get("latency_ms", 0.0)),
        metadata=body.get("metadata") or {},
    )
    if kind in ("inpaint", "edit"):
        if "image" not in body:
            raise ProtocolError(f"{kind} response missing image")
        resp.image = decode_image_payload(body["image"])
    elif kind == "ground":
        raw = body.get("boxes")
        if not isinstance(raw, list):
            raise ProtocolError("ground response missing boxes list")
        boxes = []
        for b in raw:
            try:
                box = tuple(float(v) for v in b["box"])
                score = float(b["score"])
                label = str(b["label"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"malformed box record {b!r}") from exc
            if len(box) != 4:
                raise ProtocolError(f"box must have 4 coordinates, got {box}")
            if not (0.0 <= score <= 1.0):
                raise ProtocolError(f"box score {score} outside [0, 1]")
            boxes.append(DetectedBox(label=label, box=box, score=score))
        resp.boxes = boxes
    elif kind == "embed":
        vec = body.get("vector")
        if not isinstance(vec, list) or not vec:
            raise ProtocolError("embed response missing vector")
        arr = np.asarray(vec, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ProtocolError("embed vector has non-finite entries")
        resp.vector = arr
    return resp


def remote_call(
    request: BackendRequest,
    endpoint: str,
    timeout: float | None = None,
    retries: int = 3,
    client: httpx.Client | None = None,
    retry_wait: float = 0.1,
) -> BackendResponse:
    """POST a request to the bridge, retrying transport failures idempotently.

    The retried request body is byte-identical (same seed, same correlation
    id), so the bridge may treat repeats as replays.
    """
    body = request.to_wire()
    url = endpoint.rstrip("/") + f"/v1/{request.kind}"
    timeout = timeout if timeout is not None else DEFAULT_TIMEOUTS[request.kind]
    own_client = client is None
    if own_client:
        client = httpx.Client(timeout=timeout)
    last_exc: Exception | None = None
    try:
        for attempt in range(1, max(retries, 1) + 1):
            try:
                http_resp = client.post(url, json=body, timeout=timeout)
            except httpx.TimeoutException as exc:
                last_exc = BackendTimeoutError(f"{request.kind} request timed out after {timeout}s")
                last_exc.__cause__ = exc
            except httpx.TransportError as exc:
                last_exc = BackendError(f"{request.kind} transport failure: {exc}")
                last_exc.__cause__ = exc
            else:
                resp = _handle_http_response(request, http_resp)
                resp.attempts = attempt
                return resp
            if attempt <= retries - 1 and retry_wait:
                time.sleep(retry_wait)
        raise last_exc
    finally:
        if own_client:
            client.close()


def _handle_http_response(request: BackendRequest, http_resp: httpx.Response) -> BackendResponse:
    try:
        body = http_resp.json()
    except (json.JSONDecodeError, ValueError) as exc:
        raise ProtocolError(f"{request.kind} response is not JSON") from exc
    if http_resp.status_code >= 400:
        if isinstance(body, dict) and "code" in body and "message" in body:
            raise RemoteError(str(body["code"]), str(body["message"]))
        raise ProtocolError(
            f"{request.kind} failed with HTTP {http_resp.status_code} and no error body"
        )
    return parse_response(request.kind, body, request_id=request.request_id)


class RemoteBackend:
    """Client for all four backend kinds against one bridge endpoint.

    Thread-safe; concurrent calls are capped by max_in_flight.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float | None = None,
        retries: int = 3,
        max_in_flight: int = 4,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.backend_id = f"remote:{endpoint}"
        self._client = client or httpx.Client()
        self._slots = threading.Semaphore(max_in_flight)

    def _call(self, request: BackendRequest) -> BackendResponse:
        with self._slots:
            return remote_call(
                request,
                self.endpoint,
                timeout=self.timeout,
                retries=self.retries,
                client=self._client,
            )

    def inpaint(self, image, mask):
        resp = self._call(BackendRequest(kind="inpaint", image=image, mask=mask))
        return resp.image

    def ground(self, image, queries, max_boxes=None, key=None):
        resp = self._call(
            BackendRequest(kind="ground", image=image, queries=list(queries), max_boxes=max_boxes)
        )
        return resp.boxes

    def embed_image(self, image):
        resp = self._call(BackendRequest(kind="embed", modality="image", image=image))
        return resp.vector

    def embed_text(self, text):
        resp = self._call(BackendRequest(kind="embed", modality="text", text=text))
        return resp.vector

    def edit(self, image, instruction, steps=DEFAULT_EDIT_STEPS, seed=0, guidance=None):
        resp = self._call(
            BackendRequest(
                kind="edit",
                image=image,
                instruction=instruction,
                steps=steps,
                seed=seed,
                guidance=guidance,
            )
        )
        return resp.image

    def close(self):
        self._client.close()


@dataclass
class BackendSet:
    """The four model roles the pipeline consumes."""

    inpainter: object
    grounder: object
    embedder: object
    editor: object
