"""Canvas layout planning, image composition and coordinate transforms.

Support and query images are placed on one shared canvas so a promptable
segmenter can attend across them in a single pass. All fractional extents
use floor and the query region absorbs the remainder, so every non-letterbox
layout tiles the canvas exactly. Boxes move between source and canvas
coordinates through a per-placement affine map with round-half-away-from-zero
rounding; predicted canvas masks come back to query resolution by
nearest-neighbor sampling on pixel centers.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import CompositionError, LayoutError
from .rle import MaskRLE, decode_rle, encode_rle

Box = tuple[int, int, int, int]

DEFAULT_CANVAS_SIZE = (1008, 1008)

VARIANT_POSITIONS = {
    "ARP_TopPadded": ("top",),
    "FR_Horizontal": ("left",),
    "FR_Vertical": ("top", "bottom"),
    "Grid2x3": ("grid",),
    "HorizontalStrip": ("top",),
    "VerticalStrip": ("left",),
    "InverseL": ("top_left",),
}
_RATIO_FREE = ("ARP_TopPadded", "Grid2x3")
_ONE_SHOT = ("ARP_TopPadded", "FR_Horizontal", "FR_Vertical")
_FIVE_SHOT = ("Grid2x3", "HorizontalStrip", "VerticalStrip", "InverseL")


@dataclass(frozen=True)
class LayoutSpec:
    variant: str
    support_position: str
    ratio: float | None
    shot: int

    def __post_init__(self) -> None:
        if self.variant not in VARIANT_POSITIONS:
            raise LayoutError(f"unknown layout variant {self.variant!r}")
        allowed = VARIANT_POSITIONS[self.variant]
        if self.support_position not in allowed:
            raise LayoutError(
                f"{self.variant} supports positions {allowed}, got {self.support_position!r}"
            )
        if self.variant in _RATIO_FREE:
            if self.ratio is not None:
                raise LayoutError(f"{self.variant} does not take a ratio")
        else:
            if self.ratio is None or not 0.0 < self.ratio < 1.0:
                raise LayoutError(f"{self.variant} needs a ratio in (0,1), got {self.ratio}")
        expected_shot = 1 if self.variant in _ONE_SHOT else 5
        if self.shot != expected_shot:
            raise LayoutError(
                f"{self.variant} is a {expected_shot}-shot layout, got shot={self.shot}"
            )


@dataclass(frozen=True)
class Placement:
    role: str  # "support" | "query"
    index: int | None  # support slot, None for the query
    rect: Box  # half-open canvas rectangle
    source_size: tuple[int, int]  # (width, height) of the original image

    def __post_init__(self) -> None:
        x0, y0, x1, y1 = self.rect
        if x1 <= x0 or y1 <= y0:
            raise LayoutError(f"degenerate placement rect {self.rect}")

    @property
    def rect_size(self) -> tuple[int, int]:
        x0, y0, x1, y1 = self.rect
        return x1 - x0, y1 - y0


@dataclass(frozen=True)
class CanvasPlan:
    canvas_size: tuple[int, int]  # (W, H)
    placements: tuple[Placement, ...]

    @property
    def query(self) -> Placement:
        for p in self.placements:
            if p.role == "query":
                return p
        raise LayoutError("plan has no query placement")

    @property
    def supports(self) -> tuple[Placement, ...]:
        return tuple(p for p in self.placements if p.role == "support")


@dataclass(eq=False)
class ComposedCanvas:
    pixels: np.ndarray  # (H, W, 3) uint8
    plan: CanvasPlan


def _letterbox_rect(half: Box, size: tuple[int, int]) -> Box:
    """Largest aspect-preserving rect for ``size`` centered in ``half``."""
    hx0, hy0, hx1, hy1 = half
    hw, hh = hx1 - hx0, hy1 - hy0
    sw, sh = size
    scale = min(hw / sw, hh / sh)
    fit_w = max(1, math.floor(sw * scale))
    fit_h = max(1, math.floor(sh * scale))
    x0 = hx0 + (hw - fit_w) // 2
    y0 = hy0 + (hh - fit_h) // 2
    return (x0, y0, x0 + fit_w, y0 + fit_h)


def plan_layout(
    layout: LayoutSpec,
    support_sizes: list[tuple[int, int]],
    query_size: tuple[int, int],
    canvas_size: tuple[int, int] = DEFAULT_CANVAS_SIZE,
) -> CanvasPlan:
    """Compute the placement rectangles for one episode."""
    if len(support_sizes) != layout.shot:
        raise LayoutError(
            f"{layout.variant} expects {layout.shot} support sizes, got {len(support_sizes)}"
        )
    W, H = canvas_size
    r = layout.ratio
    v = layout.variant
    pos = layout.support_position
    support_rects: list[Box]

    if v == "FR_Vertical":
        band = math.floor(r * H)
        if pos == "top":
            support_rects = [(0, 0, W, band)]
            query_rect = (0, band, W, H)
        else:
            support_rects = [(0, H - band, W, H)]
            query_rect = (0, 0, W, H - band)
    elif v == "FR_Horizontal":
        band = math.floor(r * W)
        support_rects = [(0, 0, band, H)]
        query_rect = (band, 0, W, H)
    elif v == "ARP_TopPadded":
        split = H // 2
        support_rects = [_letterbox_rect((0, 0, W, split), support_sizes[0])]
        query_rect = _letterbox_rect((0, split, W, H), query_size)
    elif v == "Grid2x3":
        xs = [math.floor(i * W / 3) for i in range(4)]
        ys = [math.floor(j * H / 2) for j in range(3)]
        cells = [
            (xs[c], ys[rr], xs[c + 1], ys[rr + 1]) for rr in range(2) for c in range(3)
        ]
        support_rects = cells[:5]
        query_rect = cells[5]
    elif v == "HorizontalStrip":
        band = math.floor(r * H)
        xs = [math.floor(i * W / 5) for i in range(6)]
        support_rects = [(xs[i], 0, xs[i + 1], band) for i in range(5)]
        query_rect = (0, band, W, H)
    elif v == "VerticalStrip":
        band = math.floor(r * W)
        ys = [math.floor(i * H / 5) for i in range(6)]
        support_rects = [(0, ys[i], band, ys[i + 1]) for i in range(5)]
        query_rect = (band, 0, W, H)
    elif v == "InverseL":
        top = math.floor(r * H)
        left = math.floor(r * W)
        xs = [math.floor(i * W / 3) for i in range(4)]
        top_cells = [(xs[i], 0, xs[i + 1], top) for i in range(3)]
        rest = H - top
        ys = [top + math.floor(i * rest / 2) for i in range(3)]
        left_cells = [(0, ys[i], left, ys[i + 1]) for i in range(2)]
        support_rects = top_cells + left_cells
        query_rect = (left, top, W, H)
    else:  # pragma: no cover - guarded by LayoutSpec validation
        raise LayoutError(f"unknown layout variant {v!r}")

    placements = [
        Placement(role="support", index=i, rect=rect, source_size=support_sizes[i])
        for i, rect in enumerate(support_rects)
    ]
    placements.append(Placement(role="query", index=None, rect=query_rect, source_size=query_size))
    for p in placements:
        x0, y0, x1, y1 = p.rect
        if not (0 <= x0 and 0 <= y0 and x1 <= W and y1 <= H):
            raise LayoutError(f"placement {p.rect} exceeds canvas {canvas_size}")
    return CanvasPlan(canvas_size=canvas_size, placements=tuple(placements))


def compose(
    plan: CanvasPlan, support_images: list[np.ndarray], query_image: np.ndarray
) -> ComposedCanvas:
    """Resample every image into its placement rect; everything else is black."""
    W, H = plan.canvas_size
    pixels = np.zeros((H, W, 3), dtype=np.uint8)
    rasters = {("support", i): img for i, img in enumerate(support_images)}
    rasters[("query", None)] = query_image
    for p in plan.placements:
        img = rasters.get((p.role, p.index))
        if img is None:
            raise CompositionError(f"no raster for placement {p.role}[{p.index}]")
        ih, iw = img.shape[0], img.shape[1]
        if (iw, ih) != p.source_size:
            raise CompositionError(
                f"raster {iw}x{ih} does not match declared source size "
                f"{p.source_size} for {p.role}[{p.index}]"
            )
        x0, y0, x1, y1 = p.rect
        pixels[y0:y1, x0:x1] = kernels.bilinear_rgb(
            np.ascontiguousarray(img), y1 - y0, x1 - x0
        )
    return ComposedCanvas(pixels=pixels, plan=plan)


def _round_half_away(x: float) -> int:
    if x >= 0:
        return math.floor(x + 0.5)
    return math.ceil(x - 0.5)


def to_canvas_box(box: Box, placement: Placement) -> Box:
    """Map a source-coordinate box into canvas coordinates (clamped to the rect)."""
    x0, y0, x1, y1 = placement.rect
    sw, sh = placement.source_size
    if not box_in_bounds(box, (sw, sh)):
        warnings.warn(f"box {box} outside source bounds {sw}x{sh}; clamping", RuntimeWarning)
    fx = (x1 - x0) / sw
    fy = (y1 - y0) / sh
    cx0 = x0 + _round_half_away(box[0] * fx)
    cy0 = y0 + _round_half_away(box[1] * fy)
    cx1 = x0 + _round_half_away(box[2] * fx)
    cy1 = y0 + _round_half_away(box[3] * fy)
    cx0 = min(max(cx0, x0), x1)
    cy0 = min(max(cy0, y0), y1)
    cx1 = min(max(cx1, x0), x1)
    cy1 = min(max(cy1, y0), y1)
    return (cx0, cy0, cx1, cy1)


def from_canvas_box(box: Box, placement: Placement) -> Box:
    """Inverse affine map of :func:`to_canvas_box` with the same rounding."""
    x0, y0, x1, y1 = placement.rect
    sw, sh = placement.source_size
    fx = sw / (x1 - x0)
    fy = sh / (y1 - y0)
    sx0 = _round_half_away((box[0] - x0) * fx)
    sy0 = _round_half_away((box[1] - y0) * fy)
    sx1 = _round_half_away((box[2] - x0) * fx)
    sy1 = _round_half_away((box[3] - y0) * fy)
    return (
        min(max(sx0, 0), sw),
        min(max(sy0, 0), sh),
        min(max(sx1, 0), sw),
        min(max(sy1, 0), sh),
    )


def box_in_bounds(box: Box, size: tuple[int, int]) -> bool:
    w, h = size
    return 0 <= box[0] <= box[2] <= w and 0 <= box[1] <= box[3] <= h


def mask_to_canvas(grid: np.ndarray, placement: Placement) -> np.ndarray:
    """Forward-map a source-resolution mask into its placement rect (nearest)."""
    x0, y0, x1, y1 = placement.rect
    return kernels.nearest_mask(np.ascontiguousarray(grid), y1 - y0, x1 - x0)


def from_canvas_mask_grid(canvas_mask: np.ndarray, query_placement: Placement) -> np.ndarray:
    """Crop the query rect and resample to query resolution (nearest)."""
    x0, y0, x1, y1 = query_placement.rect
    sw, sh = query_placement.source_size
    crop = np.ascontiguousarray(canvas_mask[y0:y1, x0:x1])
    return kernels.nearest_mask(crop, sh, sw)


def from_canvas_mask(mask: MaskRLE, query_placement: Placement) -> MaskRLE:
    """RLE-level wrapper around :func:`from_canvas_mask_grid`."""
    canvas_mask = decode_rle(mask)
    return encode_rle(from_canvas_mask_grid(canvas_mask, query_placement))


def _draw_rect(pixels: np.ndarray, rect: Box, color: tuple[int, int, int]) -> None:
    H, W = pixels.shape[:2]
    x0, y0, x1, y1 = rect
    x0 = min(max(x0, 0), W - 1)
    y0 = min(max(y0, 0), H - 1)
    x1 = min(max(x1, 1), W)
    y1 = min(max(y1, 1), H)
    pixels[y0, x0:x1] = color
    pixels[y1 - 1, x0:x1] = color
    pixels[y0:y1, x0] = color
    pixels[y0:y1, x1 - 1] = color


def annotate_canvas(
    canvas: ComposedCanvas,
    positive_boxes: list[Box] = (),
    negative_boxes: list[Box] = (),
) -> np.ndarray:
    """Debug rendering: placement borders plus prompt boxes, on a copy."""
    out = canvas.pixels.copy()
    for p in canvas.plan.placements:
        _draw_rect(out, p.rect, (255, 255, 255) if p.role == "support" else (80, 160, 255))
    for box in positive_boxes:
        _draw_rect(out, box, (0, 255, 0))
    for box in negative_boxes:
        _draw_rect(out, box, (255, 0, 0))
    return out
