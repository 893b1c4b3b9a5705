"""Editing quality metrics: pixel distances and embedding similarities.

Embeddings come from a backend (or precomputed sidecar vectors); no model
weights are loaded here. Pixel values are normalized to [0, 1] before
distancing, and the quadratic distance is root-mean-square so magnitudes are
resolution-invariant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimMismatchError, ShapeMismatchError, ZeroVectorError


@dataclass(frozen=True)
class MetricReport:
    l1: float
    l2: float
    clip_i: float
    clip_t: float
    dino: float
    count: int

    def to_dict(self) -> dict:
        return {
            "l1": self.l1,
            "l2": self.l2,
            "clip_i": self.clip_i,
            "clip_t": self.clip_t,
            "dino": self.dino,
            "count": self.count,
        }


@dataclass(frozen=True)
class EvalPair:
    generated: np.ndarray
    reference: np.ndarray
    instruction: str
    objects: tuple[str, ...] | None = None  # added object names, for the bare text probe
    # precomputed sidecar vectors; keys among generated_clip, reference_clip,
    # generated_dino, reference_dino, text. Missing keys fall back to the backend.
    embeddings: dict | None = None

    def vector(self, key: str):
        if self.embeddings and key in self.embeddings:
            return np.asarray(self.embeddings[key], dtype=float)
        return None


def _normalize(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img)
    if arr.dtype == np.uint8:
        return arr.astype(float) / 255.0
    return arr.astype(float)


def pixel_distance(a: np.ndarray, b: np.ndarray, norm: str = "l1") -> float:
    """Mean per-pixel distance between two same-shape images in [0, 1].

    l1 is the mean absolute difference, l2 the root mean squared difference.
    """
    a = _normalize(a)
    b = _normalize(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")
    diff = a - b
    if norm == "l1":
        return float(np.mean(np.abs(diff)))
    if norm == "l2":
        return float(np.sqrt(np.mean(diff * diff)))
    raise ValueError(f"norm must be 'l1' or 'l2', got {norm!r}")


def embedding_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity, clipped to [-1, 1] against rounding drift."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise DimMismatchError(f"vector dims differ: {u.shape[0]} vs {v.shape[0]}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVectorError("cosine similarity undefined for zero vectors")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def bare_addition_text(pair: EvalPair) -> str:
    """Text probe for the image-text similarity: "Add a <obj>"."""
    if pair.objects:
        return "Add a " + ", a ".join(pair.objects)
    return pair.instruction


def evaluate_pairs(
    pairs: list[EvalPair],
    embed_backend,
    dino_backend=None,
    text_source: str = "bare_template",
) -> MetricReport:
    """Aggregate per-pair metrics by arithmetic mean.

    clip_i/dino compare generated and reference image embeddings (dino via
    its own backend when provided); clip_t compares the generated image
    embedding with the text probe, which by default names just the added
    objects rather than the full instruction (text_source="instruction"
    switches to the full instruction).
    """
    if not pairs:
        raise ValueError("need at least one pair")
    if text_source not in ("bare_template", "instruction"):
        raise ValueError(f"unknown text_source {text_source!r}")
    dino_backend = dino_backend or embed_backend
    l1s, l2s, clip_is, clip_ts, dinos = [], [], [], [], []
    for pair in pairs:
        l1s.append(pixel_distance(pair.generated, pair.reference, "l1"))
        l2s.append(pixel_distance(pair.generated, pair.reference, "l2"))
        gen_vec = pair.vector("generated_clip")
        if gen_vec is None:
            gen_vec = embed_backend.embed_image(pair.generated)
        ref_vec = pair.vector("reference_clip")
        if ref_vec is None:
            ref_vec = embed_backend.embed_image(pair.reference)
        clip_is.append(embedding_similarity(gen_vec, ref_vec))
        text_vec = pair.vector("text")
        if text_vec is None:
            text = pair.instruction if text_source == "instruction" else bare_addition_text(pair)
            text_vec = embed_backend.embed_text(text)
        clip_ts.append(embedding_similarity(gen_vec, text_vec))
        gen_dino = pair.vector("generated_dino")
        if gen_dino is None:
            gen_dino = dino_backend.embed_image(pair.generated)
        ref_dino = pair.vector("reference_dino")
        if ref_dino is None:
            ref_dino = dino_backend.embed_image(pair.reference)
        dinos.append(embedding_similarity(gen_dino, ref_dino))
    return MetricReport(
        l1=float(np.mean(l1s)),
        l2=float(np.mean(l2s)),
        clip_i=float(np.mean(clip_is)),
        clip_t=float(np.mean(clip_ts)),
        dino=float(np.mean(dinos)),
        count=len(pairs),
    )


def write_report(report: MetricReport, path) -> None:
    """Flat key=value text file plus a machine-readable JSON sibling."""
    path = Path(path)
    lines = [f"{key}={value}" for key, value in report.to_dict().items()]
    path.write_text("\n".join(lines) + "\n")
    path.with_suffix(".json").write_text(json.dumps(report.to_dict(), indent=1))


def write_vector_file(vec: np.ndarray, path) -> None:
    """Sidecar vector file: a dim=<n> header line, then whitespace floats."""
    vec = np.asarray(vec, dtype=float).ravel()
    body = " ".join(repr(float(v)) for v in vec)
    Path(path).write_text(f"dim={vec.size}\n{body}\n")


def read_vector_file(path) -> np.ndarray:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("dim="):
        raise ValueError(f"{path}: missing dim= header")
    dim = int(lines[0][4:])
    values = np.array([float(tok) for tok in " ".join(lines[1:]).split()], dtype=float)
    if values.size != dim:
        raise ValueError(f"{path}: header says {dim} entries, found {values.size}")
    return values
