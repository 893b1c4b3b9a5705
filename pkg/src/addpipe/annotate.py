"""Pseudo-annotation of generated images.

Added objects are located by a grounding backend queried with their class
names only; hits below the score threshold are discarded. Ground-truth boxes
of the source image are inherited verbatim, and the merged records are
emitted as a COCO-format dataset whose added annotations carry a
`synthetic_added` flag. Records where grounding finds none of the added
objects are dropped (and counted).
"""

from __future__ import annotations

import logging
import shutil
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coco import (
    CategoryDef,
    DatasetIndex,
    ImageRecord,
    InstanceAnnotation,
    build_index,
    save_dataset,
)
from .errors import NoAddedObjectsError
from .backends import clip_box

logger = logging.getLogger(__name__)

DEFAULT_SCORE_THRESHOLD = 0.4


@dataclass(frozen=True)
class GroundedBox:
    category_id: int
    bbox: tuple[float, float, float, float]
    score: float


@dataclass
class SyntheticRecord:
    image_path: Path
    source_image_id: int
    width: int
    height: int
    inherited: list[InstanceAnnotation]
    grounded: list[GroundedBox]
    metadata: dict = field(default_factory=dict)


def ground_added(
    image: np.ndarray,
    added_category_ids: list[int],
    ds: DatasetIndex,
    grounder,
    threshold: float = DEFAULT_SCORE_THRESHOLD,
    max_boxes_per_query: int | None = None,
    fixture_key: str | None = None,
) -> list[GroundedBox]:
    """Locate the added objects, keeping per category the top boxes by score.

    The per-category keep count equals the number of times the category was
    requested, so one instruction instance maps to one annotation.
    """
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    requested = Counter(int(c) for c in added_category_ids)
    names = {ds.category_by_id[c].name: c for c in requested}
    hits = grounder.ground(image, sorted(names), max_boxes=max_boxes_per_query, key=fixture_key)
    height, width = np.asarray(image).shape[:2]
    per_category: dict[int, list[GroundedBox]] = {c: [] for c in requested}
    for hit in hits:
        cat_id = names.get(hit.label)
        if cat_id is None:
            continue  # grounder returned an unqueried label
        if hit.score < threshold:
            continue
        clipped = clip_box(hit.box, width, height)
        if clipped is None:
            continue
        per_category[cat_id].append(GroundedBox(category_id=cat_id, bbox=clipped, score=hit.score))
    kept: list[GroundedBox] = []
    for cat_id, boxes in per_category.items():
        boxes.sort(key=lambda b: -b.score)
        keep_n = requested[cat_id]
        if max_boxes_per_query is not None:
            keep_n = min(keep_n, max_boxes_per_query)
        kept.extend(boxes[:keep_n])
    kept.sort(key=lambda b: (b.category_id, -b.score))
    return kept


def merge_record(
    source_image: ImageRecord,
    source_annotations: list[InstanceAnnotation],
    grounded: list[GroundedBox],
    image_path,
    metadata: dict | None = None,
) -> SyntheticRecord:
    """Combine inherited ground truth with grounded additions.

    Raises NoAddedObjects when nothing was grounded; callers drop and count
    such records.
    """
    if not grounded:
        raise NoAddedObjectsError(f"no added objects grounded for image {source_image.id}")
    return SyntheticRecord(
        image_path=Path(image_path),
        source_image_id=source_image.id,
        width=source_image.width,
        height=source_image.height,
        inherited=list(source_annotations),
        grounded=list(grounded),
        metadata=metadata or {},
    )


def emit_synthetic_dataset(
    records: list[SyntheticRecord], categories: list[CategoryDef], out_dir
) -> Path:
    """Write the merged synthetic dataset (COCO file + image directory).

    Inherited annotations keep their source geometry bit-for-bit; masks are
    not carried over since mask losses are gated off for synthetic batches.
    Returns the annotation file path; the output re-validates on load.
    """
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    images: list[ImageRecord] = []
    annotations: list[InstanceAnnotation] = []
    next_ann_id = 1
    for idx, rec in enumerate(records):
        new_image_id = idx + 1
        file_name = f"synthetic_{new_image_id:06d}{rec.image_path.suffix or '.png'}"
        shutil.copyfile(rec.image_path, images_dir / file_name)
        images.append(
            ImageRecord(
                id=new_image_id, file_name=file_name, width=rec.width, height=rec.height
            )
        )
        for ann in rec.inherited:
            annotations.append(
                InstanceAnnotation(
                    id=next_ann_id,
                    image_id=new_image_id,
                    category_id=ann.category_id,
                    bbox=ann.bbox,
                    area=ann.area,
                    mask=None,
                    synthetic_added=False,
                )
            )
            next_ann_id += 1
        for box in rec.grounded:
            annotations.append(
                InstanceAnnotation(
                    id=next_ann_id,
                    image_id=new_image_id,
                    category_id=box.category_id,
                    bbox=box.bbox,
                    area=box.bbox[2] * box.bbox[3],
                    mask=None,
                    synthetic_added=True,
                )
            )
            next_ann_id += 1
    index = build_index(images, annotations, list(categories))
    path = out_dir / "annotations.json"
    save_dataset(index, path)
    return path
