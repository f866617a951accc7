"""COCO-format instance annotation ingestion.

The harness consumes one annotation format for every benchmark: UTF-8 JSON
with ``images``, ``categories`` and ``annotations`` arrays. Polygon
segmentations are rasterized by pixel-center containment, compressed
run-length strings are expanded, and every annotation's bbox and area are
recomputed from the decoded mask so the stored values are tight by
construction. Crowd annotations (``iscrowd=1``) are skipped and counted.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import IntegrityError, ManifestParseError
from .rle import (
    MaskRLE,
    canonical_counts,
    counts_from_coco_string,
    decode_rle,
    encode_rle,
    mask_bbox,
)


@dataclass(frozen=True)
class ImageRecord:
    id: int
    width: int
    height: int
    file_path: str


@dataclass(frozen=True)
class CategoryDef:
    id: int
    name: str


@dataclass(frozen=True)
class InstanceAnnotation:
    id: int
    image_id: int
    category_id: int
    mask: MaskRLE
    bbox: tuple[int, int, int, int]  # half-open (x0, y0, x1, y1)
    area: int


@dataclass
class DatasetManifest:
    """Resolved dataset. Treat as immutable after construction."""

    images: list[ImageRecord]
    categories: list[CategoryDef]
    annotations: list[InstanceAnnotation]
    skipped_crowd: int = 0
    skipped_empty: int = 0

    _images_by_id: dict[int, ImageRecord] = field(init=False, repr=False)
    _categories_by_id: dict[int, CategoryDef] = field(init=False, repr=False)
    _by_image: dict[int, list[InstanceAnnotation]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._images_by_id = {im.id: im for im in self.images}
        self._categories_by_id = {c.id: c for c in self.categories}
        self._by_image = {}
        for ann in self.annotations:
            self._by_image.setdefault(ann.image_id, []).append(ann)

    def image(self, image_id: int) -> ImageRecord:
        return self._images_by_id[image_id]

    def category(self, category_id: int) -> CategoryDef:
        return self._categories_by_id[category_id]

    def annotations_in_image(self, image_id: int) -> list[InstanceAnnotation]:
        return list(self._by_image.get(image_id, []))

    def instances_of(self, image_id: int, category_id: int) -> list[InstanceAnnotation]:
        return [a for a in self._by_image.get(image_id, []) if a.category_id == category_id]

    def categories_in_image(self, image_id: int) -> set[int]:
        return {a.category_id for a in self._by_image.get(image_id, [])}

    def images_with_category(self, category_id: int) -> list[int]:
        ids = {a.image_id for a in self.annotations if a.category_id == category_id}
        return sorted(ids)


def semantic_mask(manifest: DatasetManifest, image_id: int, category_id: int) -> np.ndarray:
    """Union of all instance masks of one category in an image (may be empty)."""
    image = manifest.image(image_id)
    grid = np.zeros((image.height, image.width), dtype=np.bool_)
    for ann in manifest.instances_of(image_id, category_id):
        grid |= decode_rle(ann.mask)
    return grid


def _require(obj: dict, key: str, context: str):
    if key not in obj:
        raise ManifestParseError(f"missing '{key}' in {context}")
    return obj[key]


def _rings_to_grid(rings: list, height: int, width: int, context: str) -> np.ndarray:
    grid = np.zeros((height, width), dtype=np.bool_)
    for ring in rings:
        if not isinstance(ring, list) or len(ring) < 6 or len(ring) % 2 != 0:
            raise ManifestParseError(f"invalid polygon ring in {context}")
        coords = np.asarray(ring, dtype=np.float64)
        grid |= kernels.polygon_mask(coords[0::2], coords[1::2], height, width)
    return grid


def _segmentation_to_grid(seg, image: ImageRecord, context: str) -> np.ndarray:
    if isinstance(seg, list):
        return _rings_to_grid(seg, image.height, image.width, context)
    if isinstance(seg, dict):
        size = seg.get("size")
        counts = seg.get("counts")
        if not (isinstance(size, list) and len(size) == 2):
            raise ManifestParseError(f"invalid RLE size in {context}")
        h, w = int(size[0]), int(size[1])
        if (h, w) != (image.height, image.width):
            raise IntegrityError(
                f"{context}: RLE size {h}x{w} does not match image {image.height}x{image.width}"
            )
        if isinstance(counts, str):
            raw = counts_from_coco_string(counts)
        elif isinstance(counts, list):
            raw = [int(c) for c in counts]
        else:
            raise ManifestParseError(f"invalid RLE counts in {context}")
        rle = MaskRLE(size=(h, w), counts=canonical_counts(raw))
        return decode_rle(rle)
    raise ManifestParseError(f"unsupported segmentation type in {context}")


def parse_manifest(raw_bytes: bytes) -> DatasetManifest:
    """Parse a COCO-format instance annotation document."""
    try:
        text = raw_bytes.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ManifestParseError(f"not valid UTF-8: {exc}", byte_offset=exc.start) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ManifestParseError(
            f"invalid JSON at byte {offset}: {exc.msg}", byte_offset=offset
        ) from exc
    if not isinstance(doc, dict):
        raise ManifestParseError("top-level document must be an object")

    images: list[ImageRecord] = []
    seen_image_ids: set[int] = set()
    for i, entry in enumerate(_require(doc, "images", "document")):
        ctx = f"images[{i}]"
        image_id = int(_require(entry, "id", ctx))
        width = int(_require(entry, "width", ctx))
        height = int(_require(entry, "height", ctx))
        if width <= 0 or height <= 0:
            raise ManifestParseError(f"{ctx}: non-positive dimensions {width}x{height}")
        if image_id in seen_image_ids:
            raise IntegrityError(f"duplicate image id {image_id}")
        seen_image_ids.add(image_id)
        images.append(
            ImageRecord(
                id=image_id,
                width=width,
                height=height,
                file_path=str(_require(entry, "file_name", ctx)),
            )
        )

    categories: list[CategoryDef] = []
    seen_cat_ids: set[int] = set()
    for i, entry in enumerate(_require(doc, "categories", "document")):
        ctx = f"categories[{i}]"
        cat_id = int(_require(entry, "id", ctx))
        if cat_id in seen_cat_ids:
            raise IntegrityError(f"duplicate category id {cat_id}")
        seen_cat_ids.add(cat_id)
        categories.append(CategoryDef(id=cat_id, name=str(_require(entry, "name", ctx))))

    images_by_id = {im.id: im for im in images}
    annotations: list[InstanceAnnotation] = []
    seen_ann_ids: set[int] = set()
    skipped_crowd = 0
    skipped_empty = 0
    for i, entry in enumerate(_require(doc, "annotations", "document")):
        ctx = f"annotations[{i}]"
        ann_id = int(_require(entry, "id", ctx))
        image_id = int(_require(entry, "image_id", ctx))
        category_id = int(_require(entry, "category_id", ctx))
        if ann_id in seen_ann_ids:
            raise IntegrityError(f"duplicate annotation id {ann_id}")
        seen_ann_ids.add(ann_id)
        if image_id not in images_by_id:
            raise IntegrityError(f"annotation {ann_id} references missing image id {image_id}")
        if category_id not in seen_cat_ids:
            raise IntegrityError(
                f"annotation {ann_id} references missing category id {category_id}"
            )
        if int(entry.get("iscrowd", 0)) == 1:
            skipped_crowd += 1
            continue
        image = images_by_id[image_id]
        grid = _segmentation_to_grid(_require(entry, "segmentation", ctx), image, ctx)
        area = int(np.count_nonzero(grid))
        if area == 0:
            skipped_empty += 1
            continue
        annotations.append(
            InstanceAnnotation(
                id=ann_id,
                image_id=image_id,
                category_id=category_id,
                mask=encode_rle(grid),
                bbox=mask_bbox(grid),
                area=area,
            )
        )

    return DatasetManifest(
        images=images,
        categories=categories,
        annotations=annotations,
        skipped_crowd=skipped_crowd,
        skipped_empty=skipped_empty,
    )
