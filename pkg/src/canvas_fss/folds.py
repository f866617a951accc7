"""Benchmark fold definitions.

The 20-class benchmark splits classes into four contiguous blocks of five
(ascending category id); the 80-class benchmark interleaves them so fold i
holds the classes whose ascending ordinal position p satisfies p mod 4 == i.
Both conventions can be overridden from the run config.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigurationError
from .manifest import DatasetManifest

DATASET_KINDS = ("pascal5i", "coco20i")
_CLASS_COUNT = {"pascal5i": 20, "coco20i": 80}
_FOLD_SIZE = {"pascal5i": 5, "coco20i": 20}
N_FOLDS = 4


@dataclass(frozen=True)
class FoldSpec:
    dataset_kind: str
    fold_index: int
    test_class_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.dataset_kind not in DATASET_KINDS:
            raise ConfigurationError(f"unknown dataset kind {self.dataset_kind!r}")
        if not 0 <= self.fold_index < N_FOLDS:
            raise ConfigurationError(f"fold index {self.fold_index} out of range 0..3")
        if not self.test_class_ids:
            raise ConfigurationError("fold has no test classes")
        if len(set(self.test_class_ids)) != len(self.test_class_ids):
            raise ConfigurationError("fold test classes must be distinct")


def build_folds(dataset_kind: str, manifest: DatasetManifest) -> list[FoldSpec]:
    """Partition the manifest's categories into the four test folds."""
    if dataset_kind not in DATASET_KINDS:
        raise ConfigurationError(f"unknown dataset kind {dataset_kind!r}")
    class_ids = sorted(c.id for c in manifest.categories)
    expected = _CLASS_COUNT[dataset_kind]
    if len(class_ids) != expected:
        raise ConfigurationError(
            f"{dataset_kind} expects {expected} categories, manifest has {len(class_ids)}"
        )
    folds = []
    for i in range(N_FOLDS):
        if dataset_kind == "pascal5i":
            size = _FOLD_SIZE[dataset_kind]
            ids = class_ids[i * size : (i + 1) * size]
        else:
            ids = [cid for p, cid in enumerate(class_ids) if p % N_FOLDS == i]
        folds.append(FoldSpec(dataset_kind=dataset_kind, fold_index=i, test_class_ids=tuple(ids)))
    return folds
