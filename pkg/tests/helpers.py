"""Shared fixture builders: a small deterministic detection dataset."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from addpipe.masks import encode_rle

CATEGORIES = [
    # (id, name, super_category, rarity)
    (1, "dog", "animal", "common"),
    (2, "cat", "animal", "frequent"),
    (3, "sheep", "animal", "rare"),
    (4, "car", "vehicle", "frequent"),
    (5, "bicycle", "vehicle", "rare"),
    (6, "traffic light", "outdoor", "common"),
    (7, "fire hydrant", "outdoor", "rare"),
    (8, "snowboard", "sports", "common"),
]

# image_id -> [(category_id, (x, y, w, h), mask_style)]
LAYOUT = {
    1: [(6, (5, 5, 12, 12), "rle")],
    2: [(1, (8, 8, 16, 12), "polygon"), (2, (30, 30, 20, 16), "rle")],
    3: [(3, (10, 12, 14, 10), "rle")],
    4: [(4, (4, 20, 24, 16), "polygon"), (5, (34, 10, 16, 12), "rle"), (1, (40, 40, 12, 10), "rle")],
    5: [(2, (6, 6, 10, 10), "polygon")],
    6: [(4, (12, 12, 20, 14), "rle")],
    7: [(1, (5, 30, 18, 12), "rle"), (3, (30, 5, 14, 14), "polygon")],
    8: [(7, (20, 20, 10, 18), "rle")],
    9: [(5, (8, 16, 20, 12), "rle")],
    10: [(8, (16, 24, 28, 8), "polygon"), (2, (2, 2, 10, 10), "rle")],
}

SIZE = 64


def make_image(seed: int, width: int = SIZE, height: int = SIZE) -> np.ndarray:
    """Deterministic gradient-plus-noise RGB image."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    base = np.stack(
        [
            (xx * 255 / max(width - 1, 1)),
            (yy * 255 / max(height - 1, 1)),
            ((xx + yy) * 255 / max(width + height - 2, 1)),
        ],
        axis=-1,
    )
    noise = rng.integers(0, 40, size=(height, width, 3))
    return np.clip(base + noise, 0, 255).astype(np.uint8)


def rect_mask(x: int, y: int, w: int, h: int, width: int = SIZE, height: int = SIZE) -> np.ndarray:
    grid = np.zeros((height, width), dtype=bool)
    grid[y : y + h, x : x + w] = True
    return grid


def rect_polygon(x: int, y: int, w: int, h: int) -> list[list[float]]:
    return [[float(x), float(y), float(x + w), float(y), float(x + w), float(y + h), float(x), float(y + h)]]


def build_toy_dataset(root: Path) -> dict:
    """Write the 10-image fixture dataset; returns its file locations."""
    root = Path(root)
    images_dir = root / "images"
    images_dir.mkdir(parents=True, exist_ok=True)

    images = []
    annotations = []
    ann_id = 1
    for image_id, anns in LAYOUT.items():
        file_name = f"img_{image_id:03d}.png"
        Image.fromarray(make_image(seed=image_id)).save(images_dir / file_name)
        images.append({"id": image_id, "file_name": file_name, "width": SIZE, "height": SIZE})
        for cat_id, (x, y, w, h), style in anns:
            if style == "polygon":
                segmentation = rect_polygon(x, y, w, h)
            else:
                segmentation = encode_rle(rect_mask(x, y, w, h))
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": image_id,
                    "category_id": cat_id,
                    "bbox": [float(x), float(y), float(w), float(h)],
                    "area": float(w * h),
                    "segmentation": segmentation,
                }
            )
            ann_id += 1

    categories = [
        {"id": cid, "name": name, "supercategory": sup, "rarity": rarity}
        for cid, name, sup, rarity in CATEGORIES
    ]
    ann_path = root / "annotations.json"
    ann_path.write_text(
        json.dumps({"images": images, "annotations": annotations, "categories": categories})
    )

    fixtures = {
        "*": [
            {"label": name, "box": [6.0 + 2 * cid, 4.0 + cid, 14.0, 12.0], "score": 0.9}
            for cid, name, _, _ in CATEGORIES
        ]
    }
    fixtures_path = root / "ground_fixtures.json"
    fixtures_path.write_text(json.dumps(fixtures))

    return {
        "root": root,
        "annotations": ann_path,
        "images_dir": images_dir,
        "ground_fixtures": fixtures_path,
    }


def write_pipeline_config(root: Path, out_root: Path, seed: int = 0, **extra) -> Path:
    """Config file for CLI runs over the toy dataset."""
    cfg = {
        "dataset": {"annotations": "annotations.json", "images_dir": "images"},
        "backend": {"mode": "stub", "ground_fixtures": "ground_fixtures.json"},
        "output_root": str(out_root),
        "seed": seed,
        "sampler": {"instances_min": 1, "instances_max": 2},
        "mix": {"total_batches": 50, "batch_size": 4},
    }
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    path = root / "pipeline.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path
