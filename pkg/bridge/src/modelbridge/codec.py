"""Wire-format image codec: base64 PNG payloads inside JSON bodies.

Independent implementation of the protocol's image encoding; losslessness is
required so empty-mask inpainting round-trips bit-exact.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image


class PayloadError(ValueError):
    """Image payload cannot be decoded or disagrees with its header."""


def encode_image(arr: np.ndarray) -> dict:
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


def decode_image(payload: dict, as_mask: bool = False) -> np.ndarray:
    if payload.get("format") != "png":
        raise PayloadError(f"unsupported image format {payload.get('format')!r}")
    try:
        raw = base64.b64decode(payload["data"], validate=True)
        pil = Image.open(io.BytesIO(raw))
        pil.load()
    except Exception as exc:
        raise PayloadError(f"undecodable image payload: {exc}") from exc
    arr = np.asarray(pil)
    if arr.shape[0] != payload.get("height") or arr.shape[1] != payload.get("width"):
        raise PayloadError("payload header does not match decoded dimensions")
    if as_mask:
        if arr.ndim != 2:
            arr = arr[..., 0]
        return arr > 127
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    return arr[..., :3].astype(np.uint8)
