"""Instance-aware prompt construction.

Positive prompts come from the tight box of one representative support
instance per support image (largest area, ties to the lowest id). Negative
prompts are produced by pluggable scenarios: partitioning auxiliary
predictions by a confidence threshold, sampling background boxes that miss
every annotation, or promoting distractor instances of other categories.
Text priors pick a label from a pool whose breadth is the experiment knob.

All boxes in a PromptBundle are canvas coordinates. Boxes that collapse to
zero width or height under the source-to-canvas map are dropped rather than
emitted as degenerate prompts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .backends import ScoredMask, Segmenter, SegmentRequest
from .canvas import Box, CanvasPlan, Placement, to_canvas_box
from .episodes import Episode
from .errors import CapabilityError, PromptError, ScenarioError
from .manifest import DatasetManifest, InstanceAnnotation
from .rle import decode_rle, mask_bbox

POLARITIES = ("positive", "negative")
ORIGINS = ("support_instance", "auxiliary_prediction", "background_sample", "distractor_instance")
SCENARIO_KINDS = (
    "none",
    "threshold_partition",
    "background_negatives",
    "semantic_distractors",
    "multiple_negatives",
)
TEXT_SCOPES = ("ground_truth", "fold_level", "dataset_level")

BACKGROUND_AREA_FRACTION = 0.10
BACKGROUND_IOU_MAX = 0.05
BACKGROUND_ATTEMPTS = 50
MULTIPLE_NEGATIVES_MAX = 10

ImageProvider = Callable[[int], np.ndarray]


@dataclass(frozen=True)
class BoxPrompt:
    box: Box
    polarity: str
    origin: str

    def __post_init__(self) -> None:
        if self.polarity not in POLARITIES:
            raise PromptError(f"unknown polarity {self.polarity!r}")
        if self.origin not in ORIGINS:
            raise PromptError(f"unknown origin {self.origin!r}")
        x0, y0, x1, y1 = self.box
        if x1 <= x0 or y1 <= y0:
            raise PromptError(f"degenerate prompt box {self.box}")


@dataclass(frozen=True)
class TextPrompt:
    label: str
    scope: str

    def __post_init__(self) -> None:
        if self.scope not in TEXT_SCOPES:
            raise PromptError(f"unknown text scope {self.scope!r}")


@dataclass(frozen=True)
class PromptBundle:
    positives: tuple[BoxPrompt, ...]
    negatives: tuple[BoxPrompt, ...]
    text: TextPrompt | None = None

    def __post_init__(self) -> None:
        if not self.positives:
            raise PromptError("a prompt bundle needs at least one positive prompt")
        if any(p.polarity != "positive" for p in self.positives):
            raise PromptError("positives list contains a negative prompt")
        if any(p.polarity != "negative" for p in self.negatives):
            raise PromptError("negatives list contains a positive prompt")

    def box_prompts(self) -> tuple[tuple[Box, str], ...]:
        return tuple((p.box, p.polarity) for p in (*self.positives, *self.negatives))


@dataclass(frozen=True)
class NegativeScenario:
    kind: str
    tau: float | None = None
    cap: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in SCENARIO_KINDS:
            raise ScenarioError(f"unknown negative scenario {self.kind!r}")
        if self.kind == "none":
            if self.tau is not None or self.cap is not None:
                raise ScenarioError("scenario 'none' takes no parameters")
            return
        if self.kind == "threshold_partition":
            if self.tau is None or not 0.0 < self.tau < 1.0:
                raise ScenarioError(f"threshold_partition needs tau in (0,1), got {self.tau}")
        elif self.tau is not None:
            raise ScenarioError(f"{self.kind} takes no tau")
        if self.cap is None:
            # uncapped scenarios inherit the documented 10-prompt bound
            object.__setattr__(self, "cap", MULTIPLE_NEGATIVES_MAX)
        if self.cap < 1:
            raise ScenarioError(f"{self.kind} needs cap >= 1, got {self.cap}")
        if self.kind == "multiple_negatives" and self.cap > MULTIPLE_NEGATIVES_MAX:
            raise ScenarioError(
                f"multiple_negatives cap is bounded by {MULTIPLE_NEGATIVES_MAX}, got {self.cap}"
            )

    @property
    def requires_multi_category(self) -> bool:
        return self.kind in ("semantic_distractors", "multiple_negatives")


def select_representative_instance(
    annotations: Sequence[InstanceAnnotation],
) -> InstanceAnnotation:
    """Largest-area instance; ties broken by the lowest instance id."""
    if not annotations:
        raise PromptError("no instances to select a representative from")
    return min(annotations, key=lambda a: (-a.area, a.id))


def positive_prompt(instance: InstanceAnnotation, placement: Placement) -> BoxPrompt:
    return BoxPrompt(
        box=to_canvas_box(instance.bbox, placement),
        polarity="positive",
        origin="support_instance",
    )


def partition_exemplars(
    candidates: Sequence[ScoredMask], tau: float, cap: int
) -> tuple[list[tuple[Box, float]], list[tuple[Box, float]]]:
    """Split scored masks at tau; keep the cap most confident negatives.

    Returned entries are (tight box, score) in the candidate masks' own
    coordinate space. Empty masks have no tight box and are dropped.
    """
    if not 0.0 <= tau <= 1.0:
        raise PromptError(f"tau must be in [0,1], got {tau}")

    def tight(sm: ScoredMask) -> tuple[Box, float] | None:
        grid = decode_rle(sm.mask)
        if not grid.any():
            return None
        return mask_bbox(grid), sm.score

    positives = [t for c in candidates if c.score >= tau and (t := tight(c))]
    below = sorted((c for c in candidates if c.score < tau), key=lambda c: -c.score)
    negatives = [t for c in below if (t := tight(c))][:cap]
    return positives, negatives


def box_iou(a: Box, b: Box) -> float:
    ix = max(0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    if inter == 0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def _support_pairs(episode: Episode, plan: CanvasPlan) -> list[tuple[int, Placement]]:
    supports = plan.supports
    if len(supports) != len(episode.support):
        raise PromptError(
            f"plan has {len(supports)} support placements for a {len(episode.support)}-shot episode"
        )
    return [(episode.support[i][0], supports[i]) for i in range(len(supports))]


def _map_or_none(box: Box, placement: Placement, polarity: str, origin: str) -> BoxPrompt | None:
    x0, y0, x1, y1 = to_canvas_box(box, placement)
    if x1 <= x0 or y1 <= y0:
        return None
    return BoxPrompt(box=(x0, y0, x1, y1), polarity=polarity, origin=origin)


def _auxiliary_partition(
    episode: Episode,
    manifest: DatasetManifest,
    plan: CanvasPlan,
    backend: Segmenter,
    tau: float,
    cap: int,
    image_provider: ImageProvider,
) -> tuple[list[BoxPrompt], list[BoxPrompt]]:
    """Run the backend on each support image alone and split its predictions."""
    aux_pos: list[BoxPrompt] = []
    aux_neg: list[BoxPrompt] = []
    for image_id, placement in _support_pairs(episode, plan):
        rep = select_representative_instance(
            manifest.instances_of(image_id, episode.target_class_id)
        )
        request = SegmentRequest(
            image=image_provider(image_id), box_prompts=((rep.bbox, "positive"),)
        )
        positives, negatives = partition_exemplars(backend.segment(request), tau, cap)
        for box, _score in positives:
            if p := _map_or_none(box, placement, "positive", "auxiliary_prediction"):
                aux_pos.append(p)
        for box, _score in negatives:
            if p := _map_or_none(box, placement, "negative", "auxiliary_prediction"):
                aux_neg.append(p)
    return aux_pos, aux_neg[:cap]


def _instances_descending_area(anns: Sequence[InstanceAnnotation]) -> list[InstanceAnnotation]:
    return sorted(anns, key=lambda a: (-a.area, a.id))


def _distractor_boxes(
    episode: Episode,
    manifest: DatasetManifest,
    image_id: int,
    placement: Placement,
    all_categories: bool,
) -> list[BoxPrompt]:
    others = [
        a
        for a in manifest.annotations_in_image(image_id)
        if a.category_id != episode.target_class_id
    ]
    if not others:
        raise ScenarioError(
            f"support image {image_id} of episode {episode.episode_id} has no "
            "non-target instances; the multi_category sampling constraint is required"
        )
    if not all_categories:
        totals: dict[int, int] = {}
        for a in others:
            totals[a.category_id] = totals.get(a.category_id, 0) + a.area
        chosen = min(totals, key=lambda cid: (-totals[cid], cid))
        others = [a for a in others if a.category_id == chosen]
    out = []
    for a in _instances_descending_area(others):
        if p := _map_or_none(a.bbox, placement, "negative", "distractor_instance"):
            out.append(p)
    return out


def _background_boxes(
    episode: Episode,
    manifest: DatasetManifest,
    image_id: int,
    placement: Placement,
    rng: np.random.Generator,
    want: int,
) -> list[BoxPrompt]:
    record = manifest.image(image_id)
    sw, sh = record.width, record.height
    obstacles = [a.bbox for a in manifest.annotations_in_image(image_id)]
    target_area = BACKGROUND_AREA_FRACTION * sw * sh
    out: list[BoxPrompt] = []
    for _ in range(want):
        for _attempt in range(BACKGROUND_ATTEMPTS):
            aspect = rng.uniform(0.5, 2.0)
            bw = min(max(int(round(math.sqrt(target_area * aspect))), 1), sw)
            bh = min(max(int(round(target_area / bw)), 1), sh)
            x0 = int(rng.integers(0, sw - bw + 1))
            y0 = int(rng.integers(0, sh - bh + 1))
            cand = (x0, y0, x0 + bw, y0 + bh)
            if all(box_iou(cand, ob) < BACKGROUND_IOU_MAX for ob in obstacles):
                if p := _map_or_none(cand, placement, "negative", "background_sample"):
                    out.append(p)
                break
    return out


def generate_negatives(
    scenario: NegativeScenario,
    episode: Episode,
    manifest: DatasetManifest,
    plan: CanvasPlan,
    backend: Segmenter | None = None,
    image_provider: ImageProvider | None = None,
    seed: int = 0,
) -> list[BoxPrompt]:
    """Negative prompt boxes for one episode, deterministic in (scenario, episode, seed)."""
    if scenario.kind == "none":
        raise ScenarioError("scenario 'none' generates no negatives; do not call")
    cap = scenario.cap
    out: list[BoxPrompt] = []

    if scenario.kind == "threshold_partition":
        if backend is None or image_provider is None:
            raise ScenarioError("threshold_partition needs a backend and an image provider")
        _, negatives = _auxiliary_partition(
            episode, manifest, plan, backend, scenario.tau, cap, image_provider
        )
        return negatives

    if scenario.kind == "background_negatives":
        rng = np.random.default_rng([seed, episode.episode_id])
        for image_id, placement in _support_pairs(episode, plan):
            if len(out) >= cap:
                break
            out.extend(
                _background_boxes(episode, manifest, image_id, placement, rng, cap - len(out))
            )
        return out[:cap]

    all_categories = scenario.kind == "multiple_negatives"
    for image_id, placement in _support_pairs(episode, plan):
        out.extend(_distractor_boxes(episode, manifest, image_id, placement, all_categories))
    return out[:cap]


def label_pool(episode: Episode, manifest: DatasetManifest, scope: str) -> list[str]:
    if scope == "ground_truth":
        return [manifest.category(episode.target_class_id).name]
    if scope == "fold_level":
        ids = sorted(episode.fold.test_class_ids)
    elif scope == "dataset_level":
        ids = sorted(c.id for c in manifest.categories)
    else:
        raise PromptError(f"unknown text scope {scope!r}")
    return [manifest.category(i).name for i in ids]


def select_text_label(
    episode: Episode,
    manifest: DatasetManifest,
    scope: str,
    backend: Segmenter | None = None,
    image_provider: ImageProvider | None = None,
) -> TextPrompt:
    """Pick the episode's text prior from the scope's candidate pool."""
    true_name = manifest.category(episode.target_class_id).name
    if scope == "ground_truth":
        return TextPrompt(label=true_name, scope=scope)
    pool = label_pool(episode, manifest, scope)
    if backend is None or not backend.capabilities().supports_label_scoring:
        raise CapabilityError(f"backend cannot score labels for scope {scope!r}")
    if image_provider is None:
        raise PromptError("label selection needs an image provider")
    image_id = episode.support[0][0]
    rep = select_representative_instance(
        manifest.instances_of(image_id, episode.target_class_id)
    )
    scored = backend.score_labels(image_provider(image_id), rep.bbox, pool)
    if not scored:
        raise PromptError("backend returned no label scores")
    return TextPrompt(label=scored[0][0], scope=scope)


def build_bundle(
    episode: Episode,
    manifest: DatasetManifest,
    plan: CanvasPlan,
    backend: Segmenter | None = None,
    scenario: NegativeScenario | None = None,
    image_provider: ImageProvider | None = None,
    seed: int = 0,
    text: TextPrompt | None = None,
) -> PromptBundle:
    """One episode's full prompt set: representative positives, scenario
    negatives, auxiliary positives when the threshold scenario is active."""
    positives: list[BoxPrompt] = []
    for image_id, placement in _support_pairs(episode, plan):
        rep = select_representative_instance(
            manifest.instances_of(image_id, episode.target_class_id)
        )
        positives.append(positive_prompt(rep, placement))

    negatives: list[BoxPrompt] = []
    if scenario is not None and scenario.kind != "none":
        if scenario.kind == "threshold_partition":
            if backend is None or image_provider is None:
                raise ScenarioError("threshold_partition needs a backend and an image provider")
            aux_pos, negatives = _auxiliary_partition(
                episode, manifest, plan, backend, scenario.tau, scenario.cap, image_provider
            )
            positives.extend(aux_pos)
        else:
            negatives = generate_negatives(
                scenario, episode, manifest, plan, backend, image_provider, seed
            )
    return PromptBundle(positives=tuple(positives), negatives=tuple(negatives), text=text)
