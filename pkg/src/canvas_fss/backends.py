"""Segmenter capability contract and deterministic mock backends.

A Segmenter takes an RGB raster plus box/text prompts and returns scored
instance masks. The oracle backend replays ground truth registered under a
content hash of the exact pixels it will be asked about, which closes the
evaluation loop without any model: whatever the pipeline composes, the
oracle answers with the mask the pipeline should recover. Its negative-box
modes exercise the downstream plumbing for prediction collapse (returning
nothing, or eroding the mask per negative prompt) without claiming any
particular model behaves that way.
"""
from __future__ import annotations

import hashlib
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import CodecError, PromptError, RegistryError
from .rle import MaskRLE, decode_rle, encode_rle

Box = tuple[int, int, int, int]

ORACLE_MODES = ("ignore_negatives", "suppress_all", "attenuate")
DEFAULT_MAX_MASKS = 32
MERGE_SCORE_MIN = 0.5


@dataclass(eq=False)
class SegmentRequest:
    image: np.ndarray  # (H, W, 3) uint8
    box_prompts: tuple[tuple[Box, str], ...]
    text: str | None = None
    max_masks: int = DEFAULT_MAX_MASKS

    def __post_init__(self) -> None:
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise PromptError(f"segment request image must be HxWx3, got {self.image.shape}")
        h, w = self.image.shape[:2]
        n_pos = 0
        for box, polarity in self.box_prompts:
            if polarity not in ("positive", "negative"):
                raise PromptError(f"unknown box polarity {polarity!r}")
            x0, y0, x1, y1 = box
            if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
                raise PromptError(f"box {box} outside image bounds {w}x{h}")
            n_pos += polarity == "positive"
        if n_pos == 0 and self.text is None:
            raise PromptError("segment request needs a positive box or a text label")
        if self.max_masks < 1:
            raise PromptError(f"max_masks must be >= 1, got {self.max_masks}")

    @property
    def negatives(self) -> tuple[Box, ...]:
        return tuple(b for b, p in self.box_prompts if p == "negative")


@dataclass(frozen=True)
class ScoredMask:
    mask: MaskRLE
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise PromptError(f"mask score {self.score} outside [0,1]")


@dataclass(frozen=True)
class SegmenterCapabilities:
    supports_text: bool
    supports_negative_boxes: bool
    supports_label_scoring: bool
    model_name: str


class Segmenter(Protocol):
    def capabilities(self) -> SegmenterCapabilities: ...

    def segment(self, request: SegmentRequest) -> list[ScoredMask]: ...

    def score_labels(
        self, image: np.ndarray, box: Box, labels: Sequence[str]
    ) -> list[tuple[str, float]]: ...


def _content_key(image: np.ndarray) -> str:
    arr = np.ascontiguousarray(image)
    digest = hashlib.sha256()
    digest.update(repr(arr.shape).encode())
    digest.update(arr.tobytes())
    return digest.hexdigest()


def _erode(mask: np.ndarray, iterations: int) -> np.ndarray:
    m = mask
    for _ in range(iterations):
        if not m.any():
            break
        p = np.pad(m, 1, constant_values=False)
        m = p[1:-1, 1:-1] & p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return m


@dataclass
class OracleBackend:
    """Replays registered ground truth; see module docstring for the modes."""

    mode: str = "ignore_negatives"
    erode_px: int = 2
    max_entries: int = 64
    score: float = 0.95
    _registry: OrderedDict = field(default_factory=OrderedDict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self) -> None:
        if self.mode not in ORACLE_MODES:
            raise RegistryError(f"unknown oracle mode {self.mode!r}")

    def register(self, image: np.ndarray, gt_mask: np.ndarray, label: str) -> str:
        if gt_mask.shape != image.shape[:2]:
            raise RegistryError(
                f"mask shape {gt_mask.shape} does not match image {image.shape[:2]}"
            )
        key = _content_key(image)
        entry = (encode_rle(gt_mask.astype(np.bool_)), label)
        with self._lock:
            self._registry[key] = entry
            self._registry.move_to_end(key)
            while len(self._registry) > self.max_entries:
                self._registry.popitem(last=False)
        return key

    def _lookup(self, image: np.ndarray) -> tuple[MaskRLE, str]:
        key = _content_key(image)
        with self._lock:
            try:
                entry = self._registry[key]
            except KeyError:
                raise RegistryError(
                    f"no ground truth registered for canvas {key[:12]}"
                ) from None
            self._registry.move_to_end(key)
        return entry

    def capabilities(self) -> SegmenterCapabilities:
        return SegmenterCapabilities(
            supports_text=True,
            supports_negative_boxes=True,
            supports_label_scoring=True,
            model_name="oracle",
        )

    def segment(self, request: SegmentRequest) -> list[ScoredMask]:
        gt, _label = self._lookup(request.image)
        n_neg = len(request.negatives)
        if n_neg and self.mode == "suppress_all":
            return []
        if n_neg and self.mode == "attenuate":
            grid = _erode(decode_rle(gt), self.erode_px * n_neg)
            gt = encode_rle(grid)
        return [ScoredMask(mask=gt, score=self.score)][: request.max_masks]

    def score_labels(
        self, image: np.ndarray, box: Box, labels: Sequence[str]
    ) -> list[tuple[str, float]]:
        if not labels:
            raise PromptError("label pool is empty")
        _gt, true_label = self._lookup(image)
        scored = [(lab, 1.0 if lab == true_label else 0.0) for lab in labels]
        scored.sort(key=lambda pair: -pair[1])
        return scored


def merge_masks(
    masks: Sequence[ScoredMask],
    query_rect: Box,
    canvas_size: tuple[int, int],
) -> np.ndarray:
    """Union of confident masks restricted to the query rect.

    Masks scoring below 0.5 are discarded; everything outside the query
    placement cannot belong to the query prediction and is zeroed.
    """
    W, H = canvas_size
    merged = np.zeros((H, W), dtype=np.bool_)
    for sm in masks:
        if sm.score < MERGE_SCORE_MIN:
            continue
        if sm.mask.size != (H, W):
            raise CodecError(f"mask size {sm.mask.size} does not match canvas {(H, W)}")
        merged |= decode_rle(sm.mask)
    x0, y0, x1, y1 = query_rect
    out = np.zeros_like(merged)
    out[y0:y1, x0:x1] = merged[y0:y1, x0:x1]
    return out
