"""Binary mask interchange: run-length coding, polygon rasterization, dilation.

Canonical in-memory form is a bool grid of shape (height, width). Canonical
serialized form is a run-length dict {"size": [h, w], "counts": [ints]} with
runs taken in column-major order and the first run counting zeros. The
compact string variant of "counts" (6-bit chars, delta coded) is accepted on
input and available for emission.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import MaskFormatError


def encode_rle(grid: np.ndarray) -> dict:
    """Encode a bool grid as a run-length dict with integer counts."""
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise MaskFormatError(f"mask grid must be 2-D, got shape {grid.shape}")
    h, w = grid.shape
    flat = grid.astype(bool).flatten(order="F")
    counts: list[int] = []
    if flat.size == 0:
        return {"size": [h, w], "counts": counts}
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds)
    if flat[0]:
        counts.append(0)  # runs always start with a zero count
    counts.extend(int(r) for r in runs)
    return {"size": [h, w], "counts": counts}


def decode_rle(rle: dict) -> np.ndarray:
    """Decode a run-length dict (list or string counts) to a bool grid."""
    size = rle.get("size")
    if not (isinstance(size, (list, tuple)) and len(size) == 2):
        raise MaskFormatError(f"run-length size must be [h, w], got {size!r}")
    h, w = int(size[0]), int(size[1])
    counts = rle.get("counts")
    if isinstance(counts, (str, bytes)):
        counts = string_to_counts(counts)
    if not isinstance(counts, (list, tuple)):
        raise MaskFormatError(f"counts must be a list or string, got {type(counts).__name__}")
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts):
        raise MaskFormatError("negative run length")
    total = sum(counts)
    if total != h * w:
        raise MaskFormatError(f"run lengths sum to {total}, expected {h * w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in counts:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return flat.reshape((h, w), order="F")


def counts_to_string(counts: list[int]) -> str:
    """Pack run counts into the compact 6-bit char form (delta coded)."""
    chars: list[str] = []
    for i, count in enumerate(counts):
        x = int(count)
        if i > 2:
            x -= int(counts[i - 2])
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            more = (x != -1) if (c & 0x10) else (x != 0)
            if more:
                c |= 0x20
            chars.append(chr(c + 48))
    return "".join(chars)


def string_to_counts(s: str | bytes) -> list[int]:
    """Unpack the compact 6-bit char form back into run counts."""
    if isinstance(s, bytes):
        s = s.decode("ascii")
    counts: list[int] = []
    pos = 0
    while pos < len(s):
        x = 0
        k = 0
        more = True
        while more:
            if pos >= len(s):
                raise MaskFormatError("truncated run-length string")
            c = ord(s[pos]) - 48
            if c < 0 or c > 63:
                raise MaskFormatError(f"bad character in run-length string at {pos}")
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            pos += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    return counts


def rasterize_polygons(polygons: list[list[float]], height: int, width: int) -> np.ndarray:
    """Rasterize flat [x0, y0, x1, y1, ...] rings to a bool grid.

    Even-odd fill over all rings combined; a pixel is set when its center
    (col + 0.5, row + 0.5) has odd crossing parity.
    """
    grid = np.zeros((height, width), dtype=bool)
    edges = []
    for ring in polygons:
        if len(ring) < 6 or len(ring) % 2 != 0:
            raise MaskFormatError(f"polygon ring needs >= 3 points, got {len(ring)} coordinates")
        xs = np.asarray(ring[0::2], dtype=float)
        ys = np.asarray(ring[1::2], dtype=float)
        for i in range(len(xs)):
            j = (i + 1) % len(xs)
            if ys[i] != ys[j]:
                edges.append((xs[i], ys[i], xs[j], ys[j]))
    if not edges:
        return grid
    for row in range(height):
        yc = row + 0.5
        crossings = []
        for x1, y1, x2, y2 in edges:
            if (y1 <= yc < y2) or (y2 <= yc < y1):
                crossings.append(x1 + (yc - y1) * (x2 - x1) / (y2 - y1))
        if not crossings:
            continue
        crossings.sort()
        for k in range(0, len(crossings) - 1, 2):
            lo = int(np.ceil(crossings[k] - 0.5))
            hi = int(np.ceil(crossings[k + 1] - 0.5))
            if hi > lo:
                grid[row, max(lo, 0) : min(hi, width)] = True
    return grid


def mask_decode(mask, height: int | None = None, width: int | None = None) -> np.ndarray:
    """Decode a run-length dict or polygon list to a bool grid.

    Polygon payloads need the target grid dimensions.
    """
    if isinstance(mask, dict):
        return decode_rle(mask)
    if isinstance(mask, (list, tuple)):
        if height is None or width is None:
            raise MaskFormatError("polygon decode requires height and width")
        return rasterize_polygons(list(mask), height, width)
    raise MaskFormatError(f"unsupported mask payload of type {type(mask).__name__}")


def mask_encode(grid: np.ndarray) -> dict:
    """Encode a bool grid to the canonical run-length dict."""
    return encode_rle(grid)


def mask_bbox(grid: np.ndarray) -> tuple[float, float, float, float] | None:
    """Tight (x, y, w, h) box of the set pixels, or None for an empty grid."""
    rows = np.any(grid, axis=1)
    cols = np.any(grid, axis=0)
    if not rows.any():
        return None
    r0, r1 = np.flatnonzero(rows)[[0, -1]]
    c0, c1 = np.flatnonzero(cols)[[0, -1]]
    return (float(c0), float(r0), float(c1 - c0 + 1), float(r1 - r0 + 1))


def dilate(grid: np.ndarray, radius: float) -> np.ndarray:
    """Morphological dilation by a Euclidean disk of the given radius.

    radius 0 returns the grid unchanged; radius 1 adds the 4-neighborhood.
    """
    if radius < 0:
        raise ValueError(f"dilation radius must be >= 0, got {radius}")
    grid = np.asarray(grid, dtype=bool)
    if radius == 0 or not grid.any():
        return grid.copy()
    distance = ndimage.distance_transform_edt(~grid)
    return distance <= radius
