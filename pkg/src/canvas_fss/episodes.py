"""Deterministic episode sampling.

An episode is one evaluation unit: a target class, K distinct support
images each carrying that class, and one query image that is never a
support. Sampling is a pure function of (manifest, fold, shot, seed,
constraint): images repeat freely across episodes but never within one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SamplingError
from .folds import FoldSpec
from .manifest import DatasetManifest

CONSTRAINTS = ("standard", "multi_category")


@dataclass(frozen=True)
class Episode:
    episode_id: int
    fold: FoldSpec
    target_class_id: int
    support: tuple[tuple[int, tuple[int, ...]], ...]  # (image_id, instance ids)
    query_image_id: int
    shot: int


def eligible_images(
    manifest: DatasetManifest, category_id: int, constraint: str = "standard"
) -> list[int]:
    """Sorted image ids usable for a class under the sampling constraint."""
    ids = manifest.images_with_category(category_id)
    if constraint == "multi_category":
        ids = [i for i in ids if len(manifest.categories_in_image(i)) >= 2]
    return ids


def sample_episodes(
    manifest: DatasetManifest,
    fold: FoldSpec,
    shot: int,
    n_episodes: int,
    seed: int,
    constraint: str = "standard",
) -> list[Episode]:
    if constraint not in CONSTRAINTS:
        raise SamplingError(f"unknown sampling constraint {constraint!r}")
    if shot < 1:
        raise SamplingError(f"shot must be >= 1, got {shot}")

    pools: dict[int, list[int]] = {}
    for cls in fold.test_class_ids:
        pool = eligible_images(manifest, cls, constraint)
        if len(pool) < shot + 1:
            raise SamplingError(
                f"class {cls} has {len(pool)} eligible images under "
                f"constraint {constraint!r}, need at least {shot + 1}"
            )
        pools[cls] = pool

    classes = list(fold.test_class_ids)
    rng = np.random.default_rng(seed)
    episodes: list[Episode] = []
    for episode_id in range(n_episodes):
        cls = classes[int(rng.integers(len(classes)))]
        pool = pools[cls]
        query = pool[int(rng.integers(len(pool)))]
        rest = [i for i in pool if i != query]
        picks = rng.choice(len(rest), size=shot, replace=False)
        support = tuple(
            (
                rest[int(k)],
                tuple(sorted(a.id for a in manifest.instances_of(rest[int(k)], cls))),
            )
            for k in picks
        )
        episodes.append(
            Episode(
                episode_id=episode_id,
                fold=fold,
                target_class_id=cls,
                support=support,
                query_image_id=query,
                shot=shot,
            )
        )
    return episodes
