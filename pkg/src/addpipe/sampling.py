"""Rational category sampling for object addition.

Candidates are restricted to categories sharing a super-category with an
instance already in the image; the draw then favors the long tail, either by
reciprocal instance frequency or uniformly over rare-tagged categories.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coco import DatasetIndex, category_frequencies
from .errors import EmptyCandidatesError, ParseError
from .seeding import derive_rng, derive_seed

logger = logging.getLogger(__name__)

MODES = ("coco_reciprocal", "lvis_rare_uniform")


@dataclass(frozen=True)
class SamplerConfig:
    mode: str = "coco_reciprocal"
    use_super_label_filter: bool = True
    instances_min: int = 1
    instances_max: int = 1
    rng_seed: int = 0
    num_images: int | None = None  # cap on images planned; None = all
    passes: int = 1  # plan entries per image, for scaled-up generation

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown sampler mode {self.mode!r}")
        if self.instances_min < 1 or self.instances_max < self.instances_min:
            raise ValueError("instance range must satisfy 1 <= min <= max")
        if self.passes < 1:
            raise ValueError("passes must be >= 1")


@dataclass(frozen=True)
class AdditionPlanEntry:
    image_id: int
    categories: tuple[int, ...]
    instruction_seed: int


def candidate_labels(image_id: int, ds: DatasetIndex, cfg: SamplerConfig) -> set[int]:
    """Category ids that may rationally be added to the image."""
    if image_id not in ds.image_by_id:
        raise KeyError(f"image {image_id} not in dataset")
    if not cfg.use_super_label_filter:
        return {cat.id for cat in ds.categories}
    present = ds.annotations_by_image.get(image_id, ())
    if not present:
        raise EmptyCandidatesError(f"image {image_id} has no instances to take super-labels from")
    supers = {ds.category_by_id[a.category_id].super_category for a in present}
    return {cat.id for cat in ds.categories if cat.super_category in supers}


def sample_label(
    candidates: set[int],
    frequencies: dict[int, int],
    cfg: SamplerConfig,
    rng: np.random.Generator,
    rare_ids: set[int] | None = None,
) -> int:
    """Draw one category id from the candidates.

    coco_reciprocal weights each candidate by 1/frequency (zero-frequency
    candidates count as frequency 1, the maximum weight). lvis_rare_uniform
    draws uniformly from candidates tagged rare, falling back to all
    candidates when none are.
    """
    if not candidates:
        raise EmptyCandidatesError("no candidate categories")
    ordered = sorted(candidates)
    if cfg.mode == "lvis_rare_uniform":
        if rare_ids is None:
            rare_ids = set()
        pool = [c for c in ordered if c in rare_ids]
        if not pool:
            logger.info("no rare candidates; falling back to uniform over all candidates")
            pool = ordered
        return int(pool[int(rng.integers(len(pool)))])
    weights = np.array([1.0 / max(frequencies.get(c, 0), 1) for c in ordered])
    weights /= weights.sum()
    return int(ordered[int(rng.choice(len(ordered), p=weights))])


def plan_additions(ds: DatasetIndex, cfg: SamplerConfig) -> list[AdditionPlanEntry]:
    """Deterministic per-image addition plan.

    Each selected image gets `passes` entries, every entry drawing between
    instances_min and instances_max categories with its own derived stream,
    so planning is order-independent. Images with no instances are skipped
    when the super-label filter is on.
    """
    frequencies = category_frequencies(ds)
    rare_ids = {cat.id for cat in ds.categories if cat.rarity == "rare"}
    image_ids = sorted(ds.image_by_id)
    if cfg.num_images is not None:
        image_ids = image_ids[: cfg.num_images]

    entries: list[AdditionPlanEntry] = []
    skipped = 0
    for image_id in image_ids:
        try:
            candidates = candidate_labels(image_id, ds, cfg)
        except EmptyCandidatesError:
            skipped += 1
            continue
        for pass_idx in range(cfg.passes):
            rng = derive_rng(cfg.rng_seed, image_id, pass_idx)
            n = int(rng.integers(cfg.instances_min, cfg.instances_max + 1))
            cats = tuple(
                sample_label(candidates, frequencies, cfg, rng, rare_ids) for _ in range(n)
            )
            entries.append(
                AdditionPlanEntry(
                    image_id=image_id,
                    categories=cats,
                    instruction_seed=derive_seed(cfg.rng_seed, image_id, pass_idx, "instruction"),
                )
            )
    if skipped:
        logger.info("skipped %d image(s) without instances (super-label filter on)", skipped)
    return entries


def write_plan(entries: list[AdditionPlanEntry], cfg: SamplerConfig, path) -> None:
    """Line-delimited plan file: one header line, then one record per entry."""
    header = {
        "schema": "addition_plan/v1",
        "mode": cfg.mode,
        "use_super_label_filter": cfg.use_super_label_filter,
        "instances_min": cfg.instances_min,
        "instances_max": cfg.instances_max,
        "rng_seed": cfg.rng_seed,
        "num_images": cfg.num_images,
        "passes": cfg.passes,
    }
    lines = [json.dumps(header)]
    for e in entries:
        lines.append(
            json.dumps(
                {
                    "image_id": e.image_id,
                    "categories": list(e.categories),
                    "instruction_seed": e.instruction_seed,
                }
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_plan(path) -> tuple[dict, list[AdditionPlanEntry]]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty plan file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: bad plan header") from exc
    if header.get("schema") != "addition_plan/v1":
        raise ParseError(f"{path}: unexpected plan schema {header.get('schema')!r}")
    entries = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            entries.append(
                AdditionPlanEntry(
                    image_id=int(rec["image_id"]),
                    categories=tuple(int(c) for c in rec["categories"]),
                    instruction_seed=int(rec["instruction_seed"]),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}:{i}: bad plan record") from exc
    return header, entries
