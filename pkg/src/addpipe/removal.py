"""Removal pair construction: pick instance subsets, inpaint them away, and
assemble original/edited training records.

The inpainted result is the "original" image and the untouched source is the
"edited" one, so each record teaches the inverse (addition) edit. Instances
are removed one at a time, plus one multi-instance subset per image to cover
multi-object additions.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .coco import DatasetIndex
from .errors import BackendError, MissingMaskError, NoInstancesError
from .masks import decode_rle, dilate, encode_rle
from .seeding import derive_rng

logger = logging.getLogger(__name__)

DEFAULT_DILATION_RADIUS = 4  # covers inpainting halos at mask boundaries
DEFAULT_MAX_INSTANCES = 3
DEFAULT_MAX_AREA_FRACTION = 0.4  # very large instances inpaint poorly; skip them
LONG_SIDE_LIMIT = 512


@dataclass(frozen=True)
class RemovalJob:
    image_id: int
    target_instances: tuple[int, ...]
    dilation_radius: int = DEFAULT_DILATION_RADIUS


@dataclass(frozen=True)
class RemovedInstance:
    category: str
    description: str
    bbox: tuple[float, float, float, float]
    mask: dict | None


@dataclass
class EditPair:
    """One training record: inpainted original, real edited, and instruction."""

    original: np.ndarray
    edited: np.ndarray
    instruction: str
    removed: list[RemovedInstance]
    region_mask: np.ndarray  # dilated union at working resolution
    provenance: dict = field(default_factory=dict)


def select_removal_jobs(
    ds: DatasetIndex,
    image_id: int,
    max_instances: int = DEFAULT_MAX_INSTANCES,
    rng_seed: int = 0,
    dilation_radius: int = DEFAULT_DILATION_RADIUS,
    max_area_fraction: float = DEFAULT_MAX_AREA_FRACTION,
) -> list[RemovalJob]:
    """One single-instance job per eligible annotation, plus one multi-instance
    job when the image holds at least two, with subset size uniform in
    [2, min(max_instances, k)]. Deterministic under (rng_seed, image_id).
    """
    if image_id not in ds.image_by_id:
        raise KeyError(f"image {image_id} not in dataset")
    anns = ds.annotations_by_image.get(image_id, ())
    if not anns:
        raise NoInstancesError(f"image {image_id} has no annotations")
    img = ds.image_by_id[image_id]
    image_area = img.width * img.height
    eligible = [a for a in anns if a.area / image_area <= max_area_fraction]
    if len(eligible) < len(anns):
        logger.debug(
            "image %d: skipped %d oversized instance(s)", image_id, len(anns) - len(eligible)
        )
    jobs = [
        RemovalJob(image_id=image_id, target_instances=(a.id,), dilation_radius=dilation_radius)
        for a in sorted(eligible, key=lambda a: a.id)
    ]
    if len(eligible) >= 2 and max_instances >= 2:
        rng = derive_rng(rng_seed, image_id, "multi")
        size = int(rng.integers(2, min(max_instances, len(eligible)) + 1))
        ids = sorted(a.id for a in eligible)
        subset = tuple(sorted(int(i) for i in rng.choice(ids, size=size, replace=False)))
        jobs.append(
            RemovalJob(image_id=image_id, target_instances=subset, dilation_radius=dilation_radius)
        )
    return jobs


def prepare_mask(job: RemovalJob, ds: DatasetIndex, segmenter=None) -> np.ndarray:
    """Union of the target instances' masks, dilated by the job radius.

    Instances without stored masks fall back to the segmentation backend
    (mask from bbox); with none configured, MissingMask is raised.
    """
    img = ds.image_by_id[job.image_id]
    ann_by_id = {a.id: a for a in ds.annotations_by_image[job.image_id]}
    union = np.zeros((img.height, img.width), dtype=bool)
    for ann_id in job.target_instances:
        if ann_id not in ann_by_id:
            raise KeyError(f"annotation {ann_id} not on image {job.image_id}")
        ann = ann_by_id[ann_id]
        if ann.mask is not None:
            union |= decode_rle(ann.mask)
        elif segmenter is not None:
            union |= np.asarray(segmenter.segment_bbox(img, ann.bbox), dtype=bool)
        else:
            raise MissingMaskError(
                f"annotation {ann.id} has no mask and no segmentation backend is configured"
            )
    return dilate(union, job.dilation_radius)


class BboxSegmenter:
    """Fallback segmenter: the full bbox rectangle as the instance mask."""

    def segment_bbox(self, img, bbox) -> np.ndarray:
        grid = np.zeros((img.height, img.width), dtype=bool)
        x, y, w, h = bbox
        grid[int(round(y)) : int(round(y + h)), int(round(x)) : int(round(x + w))] = True
        return grid


def _resize_for_backend(image: np.ndarray, mask: np.ndarray, limit: int):
    h, w = image.shape[:2]
    long_side = max(h, w)
    if long_side <= limit:
        return image, mask, None
    scale = limit / long_side
    new_w, new_h = max(1, round(w * scale)), max(1, round(h * scale))
    pil = Image.fromarray(image).resize((new_w, new_h), Image.LANCZOS)
    mask_pil = Image.fromarray(mask.astype(np.uint8) * 255, mode="L").resize(
        (new_w, new_h), Image.NEAREST
    )
    return np.asarray(pil), np.asarray(mask_pil) > 127, (h, w)


def build_pair(
    job: RemovalJob,
    image_pixels: np.ndarray,
    mask: np.ndarray,
    inpaint_backend,
    instruction: str,
    ds: DatasetIndex | None = None,
    provenance: dict | None = None,
    long_side_limit: int = LONG_SIDE_LIMIT,
) -> EditPair:
    """Run the inpainting backend and assemble the pair.

    Outside the dilated mask the original must match the edited image; the
    deterministic stub guarantees that bit-exactly.
    """
    if not instruction:
        raise ValueError("pair needs a nonempty instruction")
    image_pixels = np.asarray(image_pixels)
    mask = np.asarray(mask, dtype=bool)
    if image_pixels.shape[:2] != mask.shape:
        raise ValueError(f"mask {mask.shape} does not match image {image_pixels.shape[:2]}")
    work_image, work_mask, resized_from = _resize_for_backend(image_pixels, mask, long_side_limit)
    try:
        original = np.asarray(inpaint_backend.inpaint(work_image, work_mask))
    except BackendError as exc:
        raise BackendError(
            f"inpaint failed for image {job.image_id}, instances {list(job.target_instances)}: {exc}"
        ) from exc
    if original.shape != work_image.shape:
        raise BackendError(
            f"inpaint backend returned shape {original.shape}, expected {work_image.shape}"
        )
    removed = _removed_instances(job, ds) if ds is not None else []
    prov = {
        "image_id": job.image_id,
        "target_instances": list(job.target_instances),
        "dilation_radius": job.dilation_radius,
        "backend_id": getattr(inpaint_backend, "backend_id", "unknown"),
    }
    if resized_from is not None:
        prov["resized_from"] = list(resized_from)
    prov.update(provenance or {})
    return EditPair(
        original=original,
        edited=work_image,
        instruction=instruction,
        removed=removed,
        region_mask=work_mask,
        provenance=prov,
    )


def _removed_instances(job: RemovalJob, ds: DatasetIndex) -> list[RemovedInstance]:
    ann_by_id = {a.id: a for a in ds.annotations_by_image[job.image_id]}
    out = []
    for ann_id in job.target_instances:
        ann = ann_by_id[ann_id]
        cat = ds.category_by_id[ann.category_id]
        out.append(
            RemovedInstance(
                category=cat.name, description=cat.name, bbox=ann.bbox, mask=ann.mask
            )
        )
    return out


def export_removal_dataset(pairs: list[EditPair], out_dir) -> Path:
    """Write pair images (PNG) and a line-delimited manifest.

    The manifest starts with a header line and is byte-stable across
    re-exports of the same pairs.
    """
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"schema": "removal_pairs/v1", "count": len(pairs)})]
    for idx, pair in enumerate(pairs):
        stem = f"pair_{idx:05d}_{pair.provenance.get('image_id', 0)}"
        original_rel = f"images/{stem}_original.png"
        edited_rel = f"images/{stem}_edited.png"
        Image.fromarray(pair.original).save(out_dir / original_rel)
        Image.fromarray(pair.edited).save(out_dir / edited_rel)
        lines.append(
            json.dumps(
                {
                    "original": original_rel,
                    "edited": edited_rel,
                    "instruction": pair.instruction,
                    "removed": [
                        {
                            "category": r.category,
                            "description": r.description,
                            "bbox": list(r.bbox),
                            "mask": r.mask,
                        }
                        for r in pair.removed
                    ],
                    "region_mask": encode_rle(pair.region_mask),
                    "provenance": pair.provenance,
                }
            )
        )
    manifest = out_dir / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def read_removal_manifest(path) -> tuple[dict, list[dict]]:
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    records = [json.loads(line) for line in lines[1:] if line.strip()]
    return header, records
