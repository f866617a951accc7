"""Episodic evaluation loop: sample, compose, prompt, segment, score.

Results are appended to a JSON-lines file whose first line freezes the
effective config and its hash. Reruns against the same file skip episode
ids already present (crash resume); the summary is always recomputed from
the complete file, so it is independent of parallelism and of how many
passes produced the records. Identical config and seed reproduce the file
byte for byte except for wall_time_ms values.

Without an image root, rasters are synthesized deterministically from the
manifest (flat background plus solid-colored instances), which is what the
closed-loop oracle tests run on.
"""
from __future__ import annotations

import functools
import hashlib
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .backends import OracleBackend, Segmenter, SegmentRequest, merge_masks
from .canvas import (
    DEFAULT_CANVAS_SIZE,
    LayoutSpec,
    compose,
    from_canvas_mask_grid,
    mask_to_canvas,
    plan_layout,
)
from .client import RemoteSegmenter
from .episodes import Episode, sample_episodes
from .errors import (
    CapabilityError,
    CodecError,
    ConfigurationError,
    IntegrityError,
    PromptError,
    ProtocolError,
    RegistryError,
    ReportError,
    RunFailure,
    TransportError,
)
from .folds import DATASET_KINDS, build_folds
from .manifest import DatasetManifest, parse_manifest, semantic_mask
from .metrics import (
    ClassAccumulator,
    FBAccumulator,
    PixelCounts,
    fb_iou,
    miou,
    miou_episode_mean,
    pixel_counts,
)
from .prompts import TEXT_SCOPES, NegativeScenario, build_bundle, select_text_label
from .protocol import canonical_json

FAILURE_RATE_MAX = 0.01
MOCK_BACKENDS = {
    "mock:perfect": "ignore_negatives",
    "mock:suppress": "suppress_all",
    "mock:attenuate": "attenuate",
}
_EPISODE_FAULTS = (
    TransportError,
    ProtocolError,
    RegistryError,
    CodecError,
    PromptError,
    CapabilityError,
)


@dataclass(frozen=True)
class RunConfig:
    manifest_path: str
    dataset_kind: str
    fold_index: int
    shot: int = 1
    n_episodes: int = 50
    seed: int = 0
    layout: LayoutSpec | None = None
    canvas_size: tuple[int, int] = DEFAULT_CANVAS_SIZE
    negative_scenario: NegativeScenario = NegativeScenario(kind="none")
    text_scope: str | None = None
    backend: str = "mock:perfect"
    image_root: str | None = None
    parallelism: int = 1
    output_dir: str = "results"
    max_masks: int = 32

    def __post_init__(self) -> None:
        if self.dataset_kind not in DATASET_KINDS:
            raise ConfigurationError(f"unknown dataset_kind {self.dataset_kind!r}")
        if self.n_episodes < 1:
            raise ConfigurationError(f"n_episodes must be >= 1, got {self.n_episodes}")
        if self.parallelism < 1:
            raise ConfigurationError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.layout is None:
            object.__setattr__(
                self,
                "layout",
                default_layout(self.shot),
            )
        if self.layout.shot != self.shot:
            raise ConfigurationError(
                f"layout is {self.layout.shot}-shot but config says shot={self.shot}"
            )
        if self.text_scope is not None and self.text_scope not in TEXT_SCOPES:
            raise ConfigurationError(f"unknown text_scope {self.text_scope!r}")
        if not self.manifest_path:
            raise ConfigurationError("manifest_path is required")

    def to_json_dict(self) -> dict:
        return {
            "manifest_path": self.manifest_path,
            "dataset_kind": self.dataset_kind,
            "fold_index": self.fold_index,
            "shot": self.shot,
            "n_episodes": self.n_episodes,
            "seed": self.seed,
            "layout": {
                "variant": self.layout.variant,
                "support_position": self.layout.support_position,
                "ratio": self.layout.ratio,
            },
            "canvas_size": [self.canvas_size[0], self.canvas_size[1]],
            "negative_scenario": {
                "kind": self.negative_scenario.kind,
                "tau": self.negative_scenario.tau,
                "cap": self.negative_scenario.cap,
            },
            "text_scope": self.text_scope,
            "backend": self.backend,
            "image_root": self.image_root,
            "parallelism": self.parallelism,
            "output_dir": self.output_dir,
            "max_masks": self.max_masks,
        }

    @staticmethod
    def from_json_dict(data: dict) -> "RunConfig":
        base = RunConfig.defaults_dict()
        merged = _merge_config(base, data)
        layout = LayoutSpec(
            variant=merged["layout"]["variant"],
            support_position=merged["layout"]["support_position"],
            ratio=merged["layout"]["ratio"],
            shot=merged["shot"],
        )
        scenario = NegativeScenario(
            kind=merged["negative_scenario"]["kind"],
            tau=merged["negative_scenario"]["tau"],
            cap=merged["negative_scenario"]["cap"],
        )
        canvas = merged["canvas_size"]
        if not (isinstance(canvas, (list, tuple)) and len(canvas) == 2):
            raise ConfigurationError(f"canvas_size must be [W, H], got {canvas!r}")
        return RunConfig(
            manifest_path=merged["manifest_path"],
            dataset_kind=merged["dataset_kind"],
            fold_index=merged["fold_index"],
            shot=merged["shot"],
            n_episodes=merged["n_episodes"],
            seed=merged["seed"],
            layout=layout,
            canvas_size=(canvas[0], canvas[1]),
            negative_scenario=scenario,
            text_scope=merged["text_scope"],
            backend=merged["backend"],
            image_root=merged["image_root"],
            parallelism=merged["parallelism"],
            output_dir=merged["output_dir"],
            max_masks=merged["max_masks"],
        )

    @staticmethod
    def defaults_dict() -> dict:
        return {
            "manifest_path": "",
            "dataset_kind": "pascal5i",
            "fold_index": 0,
            "shot": 1,
            "n_episodes": 50,
            "seed": 0,
            "layout": {"variant": "FR_Vertical", "support_position": "top", "ratio": 0.6},
            "canvas_size": [DEFAULT_CANVAS_SIZE[0], DEFAULT_CANVAS_SIZE[1]],
            "negative_scenario": {"kind": "none", "tau": None, "cap": None},
            "text_scope": None,
            "backend": "mock:perfect",
            "image_root": None,
            "parallelism": 1,
            "output_dir": "results",
            "max_masks": 32,
        }


def default_layout(shot: int) -> LayoutSpec:
    if shot == 1:
        return LayoutSpec(variant="FR_Vertical", support_position="top", ratio=0.6, shot=1)
    return LayoutSpec(variant="InverseL", support_position="top_left", ratio=0.3, shot=5)


def _merge_config(base: dict, override: dict, path: str = "") -> dict:
    out = dict(base)
    for key, val in override.items():
        full = f"{path}{key}"
        if key not in base:
            raise ConfigurationError(f"unknown config key {full!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigurationError(f"config key {full!r} must be an object")
            out[key] = _merge_config(base[key], val, f"{full}.")
        else:
            out[key] = val
    return out


def apply_override(config_dict: dict, key: str, value) -> None:
    """Set one dotted-path key in a config dict; unknown keys are hard errors."""
    parts = key.split(".")
    cur = config_dict
    for part in parts[:-1]:
        if part not in cur or not isinstance(cur[part], dict):
            raise ConfigurationError(f"unknown config key {key!r}")
        cur = cur[part]
    if parts[-1] not in cur:
        raise ConfigurationError(f"unknown config key {key!r}")
    if isinstance(value, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            pass  # bare strings stay strings
    cur[parts[-1]] = value


def config_hash(config: RunConfig) -> str:
    hashed = config.to_json_dict()
    hashed.pop("output_dir")
    hashed.pop("parallelism")
    return hashlib.sha256(canonical_json(hashed)).hexdigest()[:16]


def synthetic_image(manifest: DatasetManifest, image_id: int) -> np.ndarray:
    """Deterministic raster: flat tinted background, solid instances."""
    from .rle import decode_rle

    record = manifest.image(image_id)
    rng = np.random.default_rng([7, image_id])
    base = rng.integers(40, 200, size=3)
    img = np.empty((record.height, record.width, 3), dtype=np.uint8)
    ramp = np.linspace(0.0, 40.0, record.height)[:, None]
    for c in range(3):
        img[:, :, c] = np.clip(float(base[c]) + ramp, 0, 255).astype(np.uint8)
    for ann in manifest.annotations_in_image(image_id):
        color_rng = np.random.default_rng([11, ann.category_id, ann.id])
        img[decode_rle(ann.mask)] = color_rng.integers(0, 256, size=3, dtype=np.uint8)
    return img


def make_image_provider(manifest: DatasetManifest, image_root: str | None, cache_size: int = 128):
    if image_root is None:
        def load(image_id: int) -> np.ndarray:
            return synthetic_image(manifest, image_id)
    else:
        root = Path(image_root)

        def load(image_id: int) -> np.ndarray:
            record = manifest.image(image_id)
            with Image.open(root / record.file_path) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
            if arr.shape[:2] != (record.height, record.width):
                raise IntegrityError(
                    f"image {record.file_path} is {arr.shape[1]}x{arr.shape[0]}, "
                    f"manifest says {record.width}x{record.height}"
                )
            return arr

    return functools.lru_cache(maxsize=cache_size)(load)


def make_backend(spec: str) -> Segmenter:
    if spec in MOCK_BACKENDS:
        return OracleBackend(mode=MOCK_BACKENDS[spec])
    if spec.startswith(("http://", "https://")):
        return RemoteSegmenter(spec)
    raise ConfigurationError(
        f"backend must be one of {sorted(MOCK_BACKENDS)} or an http(s) URL, got {spec!r}"
    )


@dataclass(frozen=True)
class EpisodeResult:
    episode_id: int
    target_class_id: int
    status: str
    counts: PixelCounts | None
    n_pos: int
    n_neg: int
    text_label: str | None
    wall_time_ms: float
    warnings: tuple[str, ...] = ()
    error: str | None = None

    def to_json_dict(self) -> dict:
        counts = None
        if self.counts is not None:
            counts = {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "fn": self.counts.fn_,
                "tn": self.counts.tn,
            }
        return {
            "kind": "episode",
            "episode_id": self.episode_id,
            "target_class_id": self.target_class_id,
            "status": self.status,
            "counts": counts,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "text_label": self.text_label,
            "warnings": list(self.warnings),
            "wall_time_ms": self.wall_time_ms,
            "error": self.error,
        }

    @staticmethod
    def from_json_dict(data: dict) -> "EpisodeResult":
        counts = None
        if data.get("counts") is not None:
            c = data["counts"]
            counts = PixelCounts(
                intersection=c["tp"],
                union=c["tp"] + c["fp"] + c["fn"],
                tp=c["tp"],
                fp=c["fp"],
                fn_=c["fn"],
                tn=c["tn"],
            )
        return EpisodeResult(
            episode_id=data["episode_id"],
            target_class_id=data["target_class_id"],
            status=data["status"],
            counts=counts,
            n_pos=data["n_pos"],
            n_neg=data["n_neg"],
            text_label=data.get("text_label"),
            wall_time_ms=data.get("wall_time_ms", 0.0),
            warnings=tuple(data.get("warnings", ())),
            error=data.get("error"),
        )


def _register_oracle_truth(
    backend: OracleBackend,
    manifest: DatasetManifest,
    episode: Episode,
    plan,
    canvas_pixels: np.ndarray,
    support_rasters: list[np.ndarray],
) -> None:
    """Give the oracle the answers for this canvas and its support images."""
    W, H = plan.canvas_size
    gt_canvas = np.zeros((H, W), dtype=np.bool_)
    label = manifest.category(episode.target_class_id).name
    for i, ((image_id, _inst), placement) in enumerate(zip(episode.support, plan.supports)):
        sm = semantic_mask(manifest, image_id, episode.target_class_id)
        x0, y0, x1, y1 = placement.rect
        gt_canvas[y0:y1, x0:x1] = mask_to_canvas(sm, placement)
        backend.register(support_rasters[i], sm, label)
    qp = plan.query
    qmask = semantic_mask(manifest, episode.query_image_id, episode.target_class_id)
    x0, y0, x1, y1 = qp.rect
    gt_canvas[y0:y1, x0:x1] = mask_to_canvas(qmask, qp)
    backend.register(canvas_pixels, gt_canvas, label)


def run_episode(
    episode: Episode,
    manifest: DatasetManifest,
    config: RunConfig,
    backend: Segmenter,
    image_provider,
) -> EpisodeResult:
    start = time.perf_counter()
    warnings_list: list[str] = []
    n_pos = n_neg = 0
    text_label = None
    try:
        support_ids = [s[0] for s in episode.support]
        support_sizes = [
            (manifest.image(i).width, manifest.image(i).height) for i in support_ids
        ]
        qrec = manifest.image(episode.query_image_id)
        plan = plan_layout(
            config.layout, support_sizes, (qrec.width, qrec.height), config.canvas_size
        )
        support_rasters = [image_provider(i) for i in support_ids]
        canvas = compose(plan, support_rasters, image_provider(episode.query_image_id))

        if isinstance(backend, OracleBackend):
            _register_oracle_truth(
                backend, manifest, episode, plan, canvas.pixels, support_rasters
            )

        text = None
        if config.text_scope is not None:
            try:
                text = select_text_label(
                    episode, manifest, config.text_scope, backend, image_provider
                )
            except CapabilityError:
                text = select_text_label(episode, manifest, "ground_truth")
                warnings_list.append("text_scope_fallback_ground_truth")
        scenario = config.negative_scenario
        bundle = build_bundle(
            episode,
            manifest,
            plan,
            backend=backend,
            scenario=scenario,
            image_provider=image_provider,
            seed=config.seed,
            text=text,
        )
        n_pos, n_neg = len(bundle.positives), len(bundle.negatives)
        text_label = text.label if text else None

        request = SegmentRequest(
            image=canvas.pixels,
            box_prompts=bundle.box_prompts(),
            text=text_label,
            max_masks=config.max_masks,
        )
        masks = backend.segment(request)
        merged = merge_masks(masks, plan.query.rect, plan.canvas_size)
        pred = from_canvas_mask_grid(merged, plan.query)
        gt = semantic_mask(manifest, episode.query_image_id, episode.target_class_id)
        counts = pixel_counts(pred, gt)
    except _EPISODE_FAULTS as exc:
        return EpisodeResult(
            episode_id=episode.episode_id,
            target_class_id=episode.target_class_id,
            status="failed",
            counts=None,
            n_pos=n_pos,
            n_neg=n_neg,
            text_label=text_label,
            wall_time_ms=round((time.perf_counter() - start) * 1000, 3),
            warnings=tuple(warnings_list),
            error=f"{type(exc).__name__}: {exc}",
        )
    return EpisodeResult(
        episode_id=episode.episode_id,
        target_class_id=episode.target_class_id,
        status="ok",
        counts=counts,
        n_pos=n_pos,
        n_neg=n_neg,
        text_label=text_label,
        wall_time_ms=round((time.perf_counter() - start) * 1000, 3),
        warnings=tuple(warnings_list),
    )


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def results_path_for(config: RunConfig) -> Path:
    name = (
        f"{config.dataset_kind}_fold{config.fold_index}_{config.shot}shot_"
        f"{config_hash(config)}.jsonl"
    )
    return Path(config.output_dir) / name


def _read_results(path: Path) -> tuple[dict, dict[int, EpisodeResult]]:
    """Header dict plus latest record per episode id."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ReportError(f"results file {path} is empty")
    header = json.loads(lines[0])
    if header.get("kind") != "header":
        raise ReportError(f"results file {path} does not start with a header line")
    records: dict[int, EpisodeResult] = {}
    for ln in lines[1:]:
        data = json.loads(ln)
        if data.get("kind") != "episode":
            continue
        rec = EpisodeResult.from_json_dict(data)
        records[rec.episode_id] = rec
    return header, records


def summarize(results_path: Path | str) -> dict:
    """Metrics over every ok record in the file; classes are those sampled."""
    path = Path(results_path)
    header, records = _read_results(path)
    acc = ClassAccumulator()
    fb = FBAccumulator()
    n_ok = n_failed = 0
    for rec in sorted(records.values(), key=lambda r: r.episode_id):
        if rec.status == "ok" and rec.counts is not None:
            acc.add(rec.target_class_id, rec.counts)
            fb.add(rec.counts)
            n_ok += 1
        else:
            n_failed += 1
    total = n_ok + n_failed
    classes = acc.classes
    summary = {
        "config_hash": header.get("config_hash"),
        "dataset_kind": header["config"]["dataset_kind"],
        "fold_index": header["config"]["fold_index"],
        "shot": header["config"]["shot"],
        "n_episodes": total,
        "n_ok": n_ok,
        "n_failed": n_failed,
        "failure_rate": (n_failed / total) if total else 0.0,
        "classes": classes,
        "miou": miou(acc, classes) if n_ok else None,
        "miou_episode_mean": miou_episode_mean(acc, classes) if n_ok else None,
        "fb_iou": fb_iou(fb) if n_ok else None,
        "per_class_iou": {
            str(cid): acc.inter.get(cid, 0) / acc.union[cid] for cid in classes
        },
    }
    return summary


def run(config: RunConfig) -> tuple[Path, dict]:
    """Execute (or resume) one evaluation run; returns results path + summary."""
    manifest = parse_manifest(Path(config.manifest_path).read_bytes())
    folds = build_folds(config.dataset_kind, manifest)
    try:
        fold = folds[config.fold_index]
    except IndexError:
        raise ConfigurationError(f"fold_index {config.fold_index} out of range") from None
    constraint = (
        "multi_category" if config.negative_scenario.requires_multi_category else "standard"
    )
    episodes = sample_episodes(
        manifest, fold, config.shot, config.n_episodes, config.seed, constraint
    )
    image_provider = make_image_provider(manifest, config.image_root)
    backend = make_backend(config.backend)

    out_path = results_path_for(config)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    cfg_hash = config_hash(config)
    done: set[int] = set()
    if out_path.exists():
        header, records = _read_results(out_path)
        if header.get("config_hash") != cfg_hash:
            raise ConfigurationError(
                f"results file {out_path} was produced by config {header.get('config_hash')}, "
                f"refusing to mix with {cfg_hash}"
            )
        done = set(records)
    else:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(
                _dump_line(
                    {
                        "kind": "header",
                        "version": 1,
                        "config": config.to_json_dict(),
                        "config_hash": cfg_hash,
                    }
                )
                + "\n"
            )

    todo = [ep for ep in episodes if ep.episode_id not in done]
    with open(out_path, "a", encoding="utf-8") as fh:

        def write(rec: EpisodeResult) -> None:
            fh.write(_dump_line(rec.to_json_dict()) + "\n")
            fh.flush()

        if config.parallelism == 1 or len(todo) <= 1:
            for ep in todo:
                write(run_episode(ep, manifest, config, backend, image_provider))
        else:
            order = [ep.episode_id for ep in todo]
            pending: dict[int, EpisodeResult] = {}
            next_idx = 0
            with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
                futures = {
                    pool.submit(
                        run_episode, ep, manifest, config, backend, image_provider
                    ): ep.episode_id
                    for ep in todo
                }
                for fut in as_completed(futures):
                    rec = fut.result()
                    pending[rec.episode_id] = rec
                    while next_idx < len(order) and order[next_idx] in pending:
                        write(pending.pop(order[next_idx]))
                        next_idx += 1

    summary = summarize(out_path)
    summary_path = out_path.with_suffix(".summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(summary, ensure_ascii=False, indent=2) + "\n")
    if summary["failure_rate"] > FAILURE_RATE_MAX:
        raise RunFailure(
            f"{summary['n_failed']}/{summary['n_episodes']} episodes failed "
            f"({summary['failure_rate']:.1%} > {FAILURE_RATE_MAX:.0%}); see {out_path}"
        )
    return out_path, summary


SWEEPABLE_PREFIXES = ("layout.", "negative_scenario.")
SWEEPABLE_KEYS = ("text_scope", "layout", "negative_scenario", "shot")


def ablate(base: RunConfig, deltas: list[dict]) -> list[tuple[Path, dict]]:
    """One run per override dict; only prompt/layout axes may vary."""
    if not deltas:
        raise ReportError("empty sweep list")
    outputs = []
    for delta in deltas:
        config_dict = base.to_json_dict()
        for key, value in delta.items():
            root = key.split(".", 1)[0]
            if root not in SWEEPABLE_KEYS:
                raise ConfigurationError(
                    f"ablation sweeps may only vary {SWEEPABLE_KEYS}, got {key!r}"
                )
            apply_override(config_dict, key, value)
        outputs.append(run(RunConfig.from_json_dict(config_dict)))
    return outputs
