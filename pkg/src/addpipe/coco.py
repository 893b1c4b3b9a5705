"""COCO-style detection dataset loading, validation, and statistics.

Annotation files follow the usual layout (images / annotations / categories
arrays). Segmentations are converted to run-length form on load so the rest
of the pipeline deals with a single canonical mask representation. A
taxonomy sidecar (JSON mapping category name -> super-category) can supply
super-categories when the source file lacks them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, ValidationError
from .masks import decode_rle, encode_rle, mask_bbox, rasterize_polygons

RARITIES = ("rare", "common", "frequent", "unspecified")
_FREQ_CODES = {"r": "rare", "c": "common", "f": "frequent"}


@dataclass(frozen=True)
class CategoryDef:
    id: int
    name: str
    super_category: str
    rarity: str = "unspecified"


@dataclass(frozen=True)
class ImageRecord:
    id: int
    file_name: str
    width: int
    height: int


@dataclass(frozen=True)
class InstanceAnnotation:
    id: int
    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]
    area: float
    mask: dict | None = None  # canonical run-length, or None
    synthetic_added: bool = False


@dataclass(frozen=True)
class DatasetIndex:
    """Validated, immutable view of a detection dataset.

    Safe to share across threads; all lookup maps are built once at load.
    """

    images: tuple[ImageRecord, ...]
    annotations: tuple[InstanceAnnotation, ...]
    categories: tuple[CategoryDef, ...]
    image_by_id: dict = field(repr=False)
    category_by_id: dict = field(repr=False)
    annotations_by_image: dict = field(repr=False)

    def category_id_for(self, name: str) -> int:
        for cat in self.categories:
            if cat.name == name:
                return cat.id
        raise KeyError(name)


def build_index(images, annotations, categories) -> DatasetIndex:
    """Assemble lookup maps and check every cross-reference invariant."""
    image_by_id: dict[int, ImageRecord] = {}
    for img in images:
        if img.id in image_by_id:
            raise ValidationError(f"image {img.id}: duplicate id")
        if img.width < 1 or img.height < 1:
            raise ValidationError(f"image {img.id}: non-positive dimensions")
        image_by_id[img.id] = img

    category_by_id: dict[int, CategoryDef] = {}
    names = set()
    for cat in categories:
        if cat.id in category_by_id:
            raise ValidationError(f"category {cat.id}: duplicate id")
        if not cat.name:
            raise ValidationError(f"category {cat.id}: empty name")
        if cat.name in names:
            raise ValidationError(f"category {cat.id}: duplicate name {cat.name!r}")
        if not cat.super_category:
            raise ValidationError(f"category {cat.id}: empty super-category")
        if cat.rarity not in RARITIES:
            raise ValidationError(f"category {cat.id}: unknown rarity {cat.rarity!r}")
        category_by_id[cat.id] = cat
        names.add(cat.name)

    annotations_by_image: dict[int, list[InstanceAnnotation]] = {img.id: [] for img in images}
    seen_ann_ids = set()
    for ann in annotations:
        if ann.id in seen_ann_ids:
            raise ValidationError(f"annotation {ann.id}: duplicate id")
        seen_ann_ids.add(ann.id)
        if ann.image_id not in image_by_id:
            raise ValidationError(f"annotation {ann.id}: image_id {ann.image_id} not in dataset")
        if ann.category_id not in category_by_id:
            raise ValidationError(
                f"annotation {ann.id}: category_id {ann.category_id} not in dataset"
            )
        img = image_by_id[ann.image_id]
        x, y, w, h = ann.bbox
        if w <= 0 or h <= 0:
            raise ValidationError(f"annotation {ann.id}: non-positive bbox size")
        if x < 0 or y < 0 or x + w > img.width or y + h > img.height:
            raise ValidationError(
                f"annotation {ann.id}: bbox {ann.bbox} exceeds image bounds "
                f"{img.width}x{img.height}"
            )
        if ann.area <= 0:
            raise ValidationError(f"annotation {ann.id}: area must be positive")
        if ann.mask is not None:
            _check_mask(ann, img)
        annotations_by_image[ann.image_id].append(ann)

    return DatasetIndex(
        images=tuple(images),
        annotations=tuple(annotations),
        categories=tuple(categories),
        image_by_id=image_by_id,
        category_by_id=category_by_id,
        annotations_by_image={k: tuple(v) for k, v in annotations_by_image.items()},
    )


def _check_mask(ann: InstanceAnnotation, img: ImageRecord) -> None:
    grid = decode_rle(ann.mask)
    if grid.shape != (img.height, img.width):
        raise ValidationError(
            f"annotation {ann.id}: mask size {grid.shape} does not match image "
            f"{img.height}x{img.width}"
        )
    tight = mask_bbox(grid)
    if tight is None:
        raise ValidationError(f"annotation {ann.id}: mask is empty")
    tx, ty, tw, th = tight
    x, y, w, h = ann.bbox
    # each edge of the tight box may drift at most one pixel from bbox
    if (
        abs(tx - x) > 1
        or abs(ty - y) > 1
        or abs((tx + tw) - (x + w)) > 1
        or abs((ty + th) - (y + h)) > 1
    ):
        raise ValidationError(
            f"annotation {ann.id}: mask bounding box {tight} disagrees with bbox {ann.bbox}"
        )
    popcount = int(grid.sum())
    if abs(popcount - ann.area) > 1:
        raise ValidationError(
            f"annotation {ann.id}: mask covers {popcount} px but area is {ann.area}"
        )


def load_dataset(path, taxonomy_path=None) -> DatasetIndex:
    """Load and validate a COCO-format annotation file.

    Raises ParseError on malformed files and ValidationError (naming the
    offending record) on invariant violations.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: top level must be an object")
    for key in ("images", "annotations", "categories"):
        if not isinstance(raw.get(key), list):
            raise ParseError(f"{path}: missing or non-list {key!r} array")

    taxonomy = _load_taxonomy(taxonomy_path) if taxonomy_path else {}

    categories = []
    for rec in raw["categories"]:
        try:
            name = str(rec["name"])
            super_category = taxonomy.get(name) or rec.get("supercategory") or "unspecified"
            rarity = rec.get("rarity") or _FREQ_CODES.get(rec.get("frequency", ""), "unspecified")
            categories.append(
                CategoryDef(
                    id=int(rec["id"]),
                    name=name,
                    super_category=str(super_category),
                    rarity=rarity,
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: bad category record {rec!r}") from exc

    images = []
    for rec in raw["images"]:
        try:
            images.append(
                ImageRecord(
                    id=int(rec["id"]),
                    file_name=str(rec["file_name"]),
                    width=int(rec["width"]),
                    height=int(rec["height"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: bad image record {rec!r}") from exc

    image_dims = {img.id: (img.height, img.width) for img in images}
    annotations = []
    for rec in raw["annotations"]:
        try:
            bbox = tuple(float(v) for v in rec["bbox"])
            if len(bbox) != 4:
                raise ValueError("bbox must have 4 entries")
            ann = InstanceAnnotation(
                id=int(rec["id"]),
                image_id=int(rec["image_id"]),
                category_id=int(rec["category_id"]),
                bbox=bbox,
                area=float(rec["area"]),
                mask=_canonical_mask(rec.get("segmentation"), image_dims.get(int(rec["image_id"]))),
                synthetic_added=bool(rec.get("synthetic_added", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: bad annotation record id={rec.get('id')!r}") from exc
        annotations.append(ann)

    return build_index(images, annotations, categories)


def _canonical_mask(segmentation, dims) -> dict | None:
    if segmentation is None or segmentation == []:
        return None
    if isinstance(segmentation, dict):
        return encode_rle(decode_rle(segmentation))
    if dims is None:
        return None  # dangling image reference; reported by build_index
    h, w = dims
    return encode_rle(rasterize_polygons(segmentation, h, w))


def _load_taxonomy(path) -> dict[str, str]:
    path = Path(path)
    try:
        mapping = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(mapping, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in mapping.items()
    ):
        raise ParseError(f"{path}: taxonomy must map category name to super-category")
    return mapping


def save_dataset(ds: DatasetIndex, path) -> None:
    """Write the index back to COCO format; load(save(ds)) is semantically equal."""
    payload = {
        "images": [
            {"id": i.id, "file_name": i.file_name, "width": i.width, "height": i.height}
            for i in ds.images
        ],
        "annotations": [_annotation_to_json(a) for a in ds.annotations],
        "categories": [_category_to_json(c) for c in ds.categories],
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def _annotation_to_json(a: InstanceAnnotation) -> dict:
    rec = {
        "id": a.id,
        "image_id": a.image_id,
        "category_id": a.category_id,
        "bbox": list(a.bbox),
        "area": a.area,
    }
    if a.mask is not None:
        rec["segmentation"] = a.mask
    if a.synthetic_added:
        rec["synthetic_added"] = True
    return rec


def _category_to_json(c: CategoryDef) -> dict:
    rec = {"id": c.id, "name": c.name, "supercategory": c.super_category}
    if c.rarity != "unspecified":
        rec["rarity"] = c.rarity
    return rec


def category_frequencies(ds: DatasetIndex) -> dict[int, int]:
    """Instance count per category id; zero-instance categories map to 0."""
    counts = {cat.id: 0 for cat in ds.categories}
    for ann in ds.annotations:
        counts[ann.category_id] += 1
    return counts


@dataclass(frozen=True)
class GrowthStat:
    category_id: int
    name: str
    count_before: int
    count_after: int
    rate: float | None  # None marks growth from a zero baseline


def growth_statistics(before: DatasetIndex, after: DatasetIndex) -> list[GrowthStat]:
    """Per-category instance growth of `after` over `before`.

    Categories present in `before` must all exist in `after`.
    """
    before_counts = category_frequencies(before)
    after_counts = category_frequencies(after)
    missing = set(before_counts) - set(after_counts)
    if missing:
        raise ValidationError(f"categories missing from the after dataset: {sorted(missing)}")
    return growth_from_counts(before_counts, after_counts, before.category_by_id)


def growth_from_counts(before_counts, after_counts, category_by_id) -> list[GrowthStat]:
    stats = []
    for cat_id in sorted(before_counts):
        b = before_counts[cat_id]
        a = after_counts.get(cat_id, 0)
        rate = (a - b) / b if b > 0 else None
        name = category_by_id[cat_id].name if cat_id in category_by_id else str(cat_id)
        stats.append(GrowthStat(cat_id, name, b, a, rate))
    return stats


def with_annotations(ds: DatasetIndex, annotations) -> DatasetIndex:
    """New validated index with the annotation list replaced."""
    return build_index(list(ds.images), list(annotations), list(ds.categories))
