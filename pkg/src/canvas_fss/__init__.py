"""Training-free few-shot segmentation evaluation via canvas composition.

Support and query images are composed onto one canvas, instance-derived
box prompts steer a promptable segmenter over it, and the predicted canvas
mask is decomposed back to query resolution and scored episodically.
"""
from .backends import (
    OracleBackend,
    ScoredMask,
    Segmenter,
    SegmenterCapabilities,
    SegmentRequest,
    merge_masks,
)
from .canvas import (
    CanvasPlan,
    ComposedCanvas,
    LayoutSpec,
    Placement,
    compose,
    from_canvas_mask,
    plan_layout,
    to_canvas_box,
)
from .episodes import Episode, sample_episodes
from .folds import FoldSpec, build_folds
from .manifest import DatasetManifest, parse_manifest, semantic_mask
from .metrics import (
    ClassAccumulator,
    FBAccumulator,
    PixelCounts,
    ablation_delta,
    episode_counts,
    fb_iou,
    miou,
)
from .prompts import (
    BoxPrompt,
    NegativeScenario,
    PromptBundle,
    TextPrompt,
    build_bundle,
    generate_negatives,
    partition_exemplars,
    positive_prompt,
    select_representative_instance,
    select_text_label,
)
from .rle import MaskRLE, decode_rle, encode_rle
from .runner import RunConfig, ablate, run, summarize

__version__ = "0.1.0"

__all__ = [
    "BoxPrompt",
    "CanvasPlan",
    "ClassAccumulator",
    "ComposedCanvas",
    "DatasetManifest",
    "Episode",
    "FBAccumulator",
    "FoldSpec",
    "LayoutSpec",
    "MaskRLE",
    "NegativeScenario",
    "OracleBackend",
    "PixelCounts",
    "Placement",
    "PromptBundle",
    "RunConfig",
    "ScoredMask",
    "SegmentRequest",
    "Segmenter",
    "SegmenterCapabilities",
    "TextPrompt",
    "ablate",
    "ablation_delta",
    "build_bundle",
    "build_folds",
    "compose",
    "decode_rle",
    "encode_rle",
    "episode_counts",
    "fb_iou",
    "from_canvas_mask",
    "generate_negatives",
    "merge_masks",
    "miou",
    "parse_manifest",
    "partition_exemplars",
    "plan_layout",
    "positive_prompt",
    "run",
    "sample_episodes",
    "select_representative_instance",
    "select_text_label",
    "semantic_mask",
    "summarize",
    "to_canvas_box",
]
