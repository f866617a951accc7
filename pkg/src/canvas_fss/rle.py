"""Column-major run-length mask codec.

Masks travel as uncompressed run lists: ``counts[0]`` is the length of the
initial background run (0 when pixel (0,0) is foreground), runs alternate
background/foreground, and zeros are only ever allowed in first position.
The flattening order is column-major: flat index ``i`` maps to pixel
``(row=i % h, col=i // h)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import CodecError


@dataclass(frozen=True)
class MaskRLE:
    """Run-length encoded binary mask. ``size`` is (height, width)."""

    size: tuple[int, int]
    counts: tuple[int, ...]

    def validate(self) -> None:
        h, w = self.size
        if h <= 0 or w <= 0:
            raise CodecError(f"mask size must be positive, got {self.size}")
        total = 0
        for i, c in enumerate(self.counts):
            if c < 0:
                raise CodecError(f"negative run length at index {i}")
            if c == 0 and i != 0:
                raise CodecError(f"interior zero run at index {i}")
            total += c
        if total != h * w:
            raise CodecError(f"run lengths sum to {total}, expected {h * w}")

    @property
    def area(self) -> int:
        return sum(self.counts[1::2])


def decode_rle(mask: MaskRLE) -> np.ndarray:
    """Expand a MaskRLE into an (h, w) boolean grid."""
    mask.validate()
    h, w = mask.size
    flat = kernels.rle_decode_flat(np.asarray(mask.counts, dtype=np.int64), h * w)
    return np.ascontiguousarray(flat.reshape((w, h)).T)


def encode_rle(grid: np.ndarray) -> MaskRLE:
    """Encode a boolean grid into canonical MaskRLE form."""
    if grid.ndim != 2:
        raise CodecError(f"expected a 2-D grid, got shape {grid.shape}")
    h, w = grid.shape
    flat = np.ascontiguousarray(grid.astype(np.bool_).ravel(order="F"))
    counts = kernels.rle_encode_flat(flat)
    if counts.size == 0:
        counts = np.zeros(1, dtype=np.int64)  # degenerate 0-pixel grid
    return MaskRLE(size=(h, w), counts=tuple(int(c) for c in counts))


def canonical_counts(raw: list[int] | tuple[int, ...]) -> tuple[int, ...]:
    """Merge zero-length and same-value runs into canonical alternating form."""
    merged: list[list[int]] = []  # [value, length]
    value = 0
    for c in raw:
        if c < 0:
            raise CodecError("negative run length")
        if c > 0:
            if merged and merged[-1][0] == value:
                merged[-1][1] += c
            else:
                merged.append([value, c])
        value ^= 1
    counts = [length for _, length in merged]
    if merged and merged[0][0] == 1:
        counts.insert(0, 0)
    if not counts:
        counts = [0]
    return tuple(counts)


def mask_bbox(grid: np.ndarray) -> tuple[int, int, int, int]:
    """Tight half-open (x0, y0, x1, y1) box of the foreground; raises if empty."""
    rows = np.flatnonzero(grid.any(axis=1))
    cols = np.flatnonzero(grid.any(axis=0))
    if rows.size == 0:
        raise CodecError("cannot take the bounding box of an empty mask")
    return int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1


def box_grid(box: tuple[int, int, int, int], h: int, w: int) -> np.ndarray:
    """Boolean grid with the half-open box interior set."""
    x0, y0, x1, y1 = box
    grid = np.zeros((h, w), dtype=np.bool_)
    grid[max(y0, 0) : max(y1, 0), max(x0, 0) : max(x1, 0)] = True
    return grid


# -- COCO compressed string form (ingestion only) ---------------------------

def counts_from_coco_string(data: str) -> list[int]:
    """Decode COCO's compact char-encoded run list (5-bit groups, delta-coded
    from the third element onward)."""
    counts: list[int] = []
    pos = 0
    n = len(data)
    while pos < n:
        x = 0
        k = 0
        more = True
        while more:
            c = ord(data[pos]) - 48
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            pos += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        if x < 0:
            raise CodecError("negative run length in compressed mask data")
        counts.append(x)
    return counts


def counts_to_coco_string(counts: list[int] | tuple[int, ...]) -> str:
    """Inverse of :func:`counts_from_coco_string` (used to build fixtures)."""
    chars: list[str] = []
    for i, c in enumerate(counts):
        x = c - counts[i - 2] if i > 2 else c
        more = True
        while more:
            low = x & 0x1F
            x >>= 5
            if x == -1 and (low & 0x10):
                more = False
            elif x == 0 and not (low & 0x10):
                more = False
            if more:
                low |= 0x20
            chars.append(chr(low + 48))
    return "".join(chars)
