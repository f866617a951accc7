"""Evaluation metrics: per-episode pixel counts, mIoU and FB-IoU.

Per-class IoU uses aggregated counts: intersections and unions are summed
over all episodes of a class before the ratio is taken, and mIoU is the
mean of those ratios over the fold's classes. The mean-of-per-episode-IoUs
variant is tracked alongside for comparability, but aggregated counts are
the canonical number. FB-IoU pools foreground and background confusion
counts across every episode and averages the two resulting IoUs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import MetricError
from .rle import MaskRLE, decode_rle


@dataclass(frozen=True)
class PixelCounts:
    intersection: int
    union: int
    tp: int
    fp: int
    fn_: int
    tn: int

    def __post_init__(self) -> None:
        if self.intersection != self.tp:
            raise MetricError("intersection must equal tp")
        if self.union != self.tp + self.fp + self.fn_:
            raise MetricError("union must equal tp+fp+fn")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn_ + self.tn

    @property
    def iou(self) -> float:
        # empty gt and empty pred is a perfect match by convention
        return self.intersection / self.union if self.union else 1.0


def pixel_counts(pred: np.ndarray, gt: np.ndarray) -> PixelCounts:
    if pred.shape != gt.shape:
        raise MetricError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    tp, fp, fn_, tn = kernels.confusion_counts(
        np.ascontiguousarray(pred, dtype=np.bool_),
        np.ascontiguousarray(gt, dtype=np.bool_),
    )
    return PixelCounts(
        intersection=int(tp), union=int(tp + fp + fn_), tp=int(tp), fp=int(fp), fn_=int(fn_), tn=int(tn)
    )


def episode_counts(pred: MaskRLE, gt: MaskRLE) -> PixelCounts:
    if pred.size != gt.size:
        raise MetricError(f"size mismatch: pred {pred.size} vs gt {gt.size}")
    return pixel_counts(decode_rle(pred), decode_rle(gt))


@dataclass
class ClassAccumulator:
    inter: dict[int, int] = field(default_factory=dict)
    union: dict[int, int] = field(default_factory=dict)
    episode_ious: dict[int, list[float]] = field(default_factory=dict)

    def add(self, class_id: int, counts: PixelCounts) -> None:
        self.inter[class_id] = self.inter.get(class_id, 0) + counts.intersection
        self.union[class_id] = self.union.get(class_id, 0) + counts.union
        self.episode_ious.setdefault(class_id, []).append(counts.iou)

    def merge(self, other: "ClassAccumulator") -> None:
        for cid, val in other.inter.items():
            self.inter[cid] = self.inter.get(cid, 0) + val
        for cid, val in other.union.items():
            self.union[cid] = self.union.get(cid, 0) + val
        for cid, ious in other.episode_ious.items():
            self.episode_ious.setdefault(cid, []).extend(ious)

    @property
    def classes(self) -> list[int]:
        return sorted(self.union)


@dataclass
class FBAccumulator:
    fg_tp: int = 0
    fg_fp: int = 0
    fg_fn: int = 0
    bg_tp: int = 0
    bg_fp: int = 0
    bg_fn: int = 0

    def add(self, counts: PixelCounts) -> None:
        self.fg_tp += counts.tp
        self.fg_fp += counts.fp
        self.fg_fn += counts.fn_
        self.bg_tp += counts.tn
        self.bg_fp += counts.fn_
        self.bg_fn += counts.fp

    def merge(self, other: "FBAccumulator") -> None:
        self.fg_tp += other.fg_tp
        self.fg_fp += other.fg_fp
        self.fg_fn += other.fg_fn
        self.bg_tp += other.bg_tp
        self.bg_fp += other.bg_fp
        self.bg_fn += other.bg_fn


def miou(acc: ClassAccumulator, fold_classes) -> float:
    """Mean over fold classes of aggregated-count IoU."""
    classes = list(fold_classes)
    if not classes:
        raise MetricError("no classes to average over")
    ious = []
    for cid in classes:
        union = acc.union.get(cid, 0)
        if union == 0:
            raise MetricError(f"class {cid} has zero aggregate union; mIoU undefined")
        ious.append(acc.inter.get(cid, 0) / union)
    return float(np.mean(ious))


def miou_episode_mean(acc: ClassAccumulator, fold_classes) -> float:
    """Secondary convention: mean over classes of mean per-episode IoU."""
    classes = list(fold_classes)
    if not classes:
        raise MetricError("no classes to average over")
    means = []
    for cid in classes:
        ious = acc.episode_ious.get(cid, [])
        if not ious:
            raise MetricError(f"class {cid} has no episodes; mIoU undefined")
        means.append(float(np.mean(ious)))
    return float(np.mean(means))


def fb_iou(acc: FBAccumulator) -> float:
    fg_den = acc.fg_tp + acc.fg_fp + acc.fg_fn
    bg_den = acc.bg_tp + acc.bg_fp + acc.bg_fn
    if fg_den == 0:
        raise MetricError("no foreground pixels in any ground truth; FB-IoU undefined")
    if bg_den == 0:
        raise MetricError("no background pixels in any ground truth; FB-IoU undefined")
    return (acc.fg_tp / fg_den + acc.bg_tp / bg_den) / 2.0


def ablation_delta(baseline: float, variant: float) -> float:
    """Signed difference in percent points, rounded to the reported decimal."""
    return round(variant - baseline, 1)
