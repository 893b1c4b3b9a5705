"""Model adapters.

An adapter is any object with the right method for its kind:

    inpaint(image, mask) -> image
    ground(image, queries, max_boxes) -> [(label, (x, y, w, h), score)]
    embed_image(image) -> 1-D vector      embed_text(text) -> 1-D vector
    edit(image, instruction, steps, seed, guidance) -> image

The reference adapters below are deterministic CPU stand-ins so the service
runs with no weights; real models (a frozen inpainter, an open-vocabulary
grounder, CLIP/DINO embedders, the fine-tuned editor) plug in through the
service config by dotted path.
"""

from __future__ import annotations

import hashlib

import numpy as np


class MeanFillInpainter:
    """Fills the masked region with the image's mean color."""

    impl_id = "reference-mean-fill"

    def inpaint(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        out = np.asarray(image).copy()
        mask = np.asarray(mask, dtype=bool)
        if mask.any():
            out[mask] = np.round(out.reshape(-1, out.shape[2]).mean(axis=0)).astype(np.uint8)
        return out


class CenterBoxGrounder:
    """Returns one deterministic centered box per query.

    Placeholder for a real detector: box geometry scales with the image and
    the score derives from the (image, query) content hash, so responses are
    stable and distinguishable but carry no semantics.
    """

    impl_id = "reference-center-box"

    def ground(self, image: np.ndarray, queries: list[str], max_boxes=None):
        h, w = np.asarray(image).shape[:2]
        hits = []
        for i, query in enumerate(queries):
            digest = hashlib.sha256(
                np.ascontiguousarray(image).tobytes() + query.encode("utf-8")
            ).digest()
            score = 0.5 + (digest[0] / 255.0) * 0.5
            bw, bh = w / 2, h / 2
            x = (w - bw) / 2 + i  # nudge repeated queries apart
            y = (h - bh) / 2
            hits.append((query, (x, y, bw, bh), score))
        if max_boxes is not None:
            hits = hits[:max_boxes]
        return hits


class HashEmbedder:
    """Content-hash seeded unit vectors; identical inputs embed identically."""

    impl_id = "reference-hash-embed"

    def __init__(self, dim: int = 64):
        self.dim = dim

    def _embed(self, material: bytes) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(material).digest()[:8], "little")
        vec = np.random.default_rng(seed).standard_normal(self.dim)
        return vec / np.linalg.norm(vec)

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        arr = np.ascontiguousarray(np.asarray(image))
        return self._embed(arr.tobytes() + str(arr.shape).encode())

    def embed_text(self, text: str) -> np.ndarray:
        return self._embed(text.encode("utf-8"))


class PatchEditor:
    """Stamps a seeded patch onto the image as the 'added object'."""

    impl_id = "reference-patch-edit"

    def edit(self, image, instruction: str, steps: int = 100, seed: int = 0, guidance=None):
        image = np.asarray(image)
        h, w = image.shape[:2]
        material = image.tobytes() + instruction.encode("utf-8") + str(int(seed)).encode()
        rng = np.random.default_rng(
            int.from_bytes(hashlib.sha256(material).digest()[:8], "little")
        )
        ph = max(2, int(rng.integers(h // 8 + 1, max(h // 3, h // 8 + 2))))
        pw = max(2, int(rng.integers(w // 8 + 1, max(w // 3, w // 8 + 2))))
        top = int(rng.integers(0, h - ph + 1))
        left = int(rng.integers(0, w - pw + 1))
        out = image.copy()
        out[top : top + ph, left : left + pw] = rng.integers(0, 256, size=3, dtype=np.uint8)
        return out


REFERENCE_ADAPTERS = {
    "inpaint": MeanFillInpainter,
    "ground": CenterBoxGrounder,
    "embed": HashEmbedder,
    "edit": PatchEditor,
}
