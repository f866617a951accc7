"""Command-line entry point.

Subcommands: compose (debug-render one episode's canvas plus a geometry
sidecar), run (one evaluation run), report (render tables from results
files), ablate (sweep prompt/layout axes), protocol-check (conformance
probe against a backend endpoint).

Exit codes: 0 success, 1 usage or configuration error, 2 run failure,
3 backend unreachable. CANVAS_FSS_BACKEND supplies the default backend;
--set and --backend override config-file values, which override defaults.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import pngio, runner
from .backends import SegmenterCapabilities, SegmentRequest
from .canvas import annotate_canvas, compose, plan_layout
from .client import RemoteSegmenter
from .episodes import sample_episodes
from .errors import (
    CanvasFSSError,
    CapabilityError,
    ConfigurationError,
    ProtocolError,
    RunFailure,
    TransportError,
)
from .folds import build_folds
from .manifest import parse_manifest
from .prompts import build_bundle
from .report import TEMPLATES, report

BACKEND_ENV = "CANVAS_FSS_BACKEND"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 1, not argparse's 2
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH", help="UTF-8 JSON run configuration")
    sub.add_argument(
        "--set",
        metavar="KEY=VALUE",
        action="append",
        default=[],
        dest="overrides",
        help="override a config field (dotted paths, repeatable)",
    )
    sub.add_argument("--backend", help="backend URL or mock:{perfect,suppress,attenuate}")
    sub.add_argument("--seed", type=int, help="override the sampling seed")
    sub.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub.add_argument("-v", "--verbose", action="store_true", help="extra diagnostics")


def build_parser() -> _Parser:
    parser = _Parser(prog="canvas-fss", description="canvas-composition FSS evaluation harness")
    sub = parser.add_subparsers(dest="command")

    p_compose = sub.add_parser("compose", help="render one episode's canvas to PNG")
    _add_config_flags(p_compose)
    p_compose.add_argument("--episode", type=int, default=0, help="episode index to render")
    p_compose.add_argument("--out", required=True, help="output PNG path")

    p_run = sub.add_parser("run", help="execute one evaluation run")
    _add_config_flags(p_run)
    p_run.add_argument("--out", help="output directory (overrides output_dir)")

    p_report = sub.add_parser("report", help="render a table from results files")
    p_report.add_argument("results", nargs="+", help="results .jsonl files")
    p_report.add_argument("--template", required=True, choices=TEMPLATES)
    p_report.add_argument("--out", help="output base path (.txt and .csv are written)")
    p_report.add_argument("--quiet", action="store_true")
    p_report.add_argument("-v", "--verbose", action="store_true")

    p_ablate = sub.add_parser("ablate", help="run a sweep of config deltas")
    _add_config_flags(p_ablate)
    p_ablate.add_argument(
        "--sweep", required=True, metavar="PATH", help="JSON list of override objects"
    )
    p_ablate.add_argument("--template", default="main_table", choices=TEMPLATES)
    p_ablate.add_argument("--out", help="report output base path")

    p_check = sub.add_parser("protocol-check", help="probe an endpoint for conformance")
    p_check.add_argument("--backend", help="endpoint URL (default: CANVAS_FSS_BACKEND)")
    p_check.add_argument("--quiet", action="store_true")
    p_check.add_argument("-v", "--verbose", action="store_true")

    return parser


def _effective_config(args: argparse.Namespace) -> runner.RunConfig:
    config_dict = runner.RunConfig.defaults_dict()
    env_backend = os.environ.get(BACKEND_ENV)
    if env_backend:
        config_dict["backend"] = env_backend
    if args.config:
        try:
            file_dict = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(file_dict, dict):
            raise ConfigurationError(f"config {args.config} must be a JSON object")
        config_dict = runner._merge_config(config_dict, file_dict)
    for pair in args.overrides:
        if "=" not in pair:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        runner.apply_override(config_dict, key, value)
    if args.backend:
        config_dict["backend"] = args.backend
    if args.seed is not None:
        config_dict["seed"] = args.seed
    if getattr(args, "out", None) and args.command == "run":
        config_dict["output_dir"] = args.out
    config = runner.RunConfig.from_json_dict(config_dict)
    if not args.quiet:
        print(f"config: {json.dumps(config.to_json_dict(), ensure_ascii=False)}")
    return config


def _check_reachable(config: runner.RunConfig) -> None:
    if config.backend.startswith(("http://", "https://")):
        RemoteSegmenter(config.backend, max_attempts=2).capabilities()


def _cmd_compose(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    manifest = parse_manifest(Path(config.manifest_path).read_bytes())
    fold = build_folds(config.dataset_kind, manifest)[config.fold_index]
    constraint = (
        "multi_category" if config.negative_scenario.requires_multi_category else "standard"
    )
    episodes = sample_episodes(
        manifest, fold, config.shot, config.n_episodes, config.seed, constraint
    )
    if not 0 <= args.episode < len(episodes):
        raise ConfigurationError(
            f"--episode {args.episode} out of range (run has {len(episodes)} episodes)"
        )
    episode = episodes[args.episode]
    provider = runner.make_image_provider(manifest, config.image_root)
    support_sizes = [
        (manifest.image(i).width, manifest.image(i).height) for i, _ in episode.support
    ]
    qrec = manifest.image(episode.query_image_id)
    plan = plan_layout(config.layout, support_sizes, (qrec.width, qrec.height), config.canvas_size)
    canvas = compose(
        plan,
        [provider(i) for i, _ in episode.support],
        provider(episode.query_image_id),
    )
    negatives_omitted = False
    try:
        scenario = config.negative_scenario
        bundle = build_bundle(
            episode, manifest, plan,
            scenario=scenario if scenario.kind != "threshold_partition" else None,
            seed=config.seed,
        )
    except CanvasFSSError:
        bundle = build_bundle(episode, manifest, plan)
        negatives_omitted = True
    if config.negative_scenario.kind == "threshold_partition":
        negatives_omitted = True
    pos = [p.box for p in bundle.positives]
    neg = [p.box for p in bundle.negatives]
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(pngio.encode_png(annotate_canvas(canvas, pos, neg)))
    geometry = {
        "episode_id": episode.episode_id,
        "target_class_id": episode.target_class_id,
        "canvas_size": [plan.canvas_size[0], plan.canvas_size[1]],
        "placements": [
            {
                "role": p.role,
                "index": p.index,
                "rect": list(p.rect),
                "source_size": list(p.source_size),
            }
            for p in plan.placements
        ],
        "positives": [list(b) for b in pos],
        "negatives": [list(b) for b in neg],
        "negatives_omitted": negatives_omitted,
    }
    sidecar = out_path.with_suffix(out_path.suffix + ".geometry.json")
    sidecar.write_text(json.dumps(geometry, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    if not args.quiet:
        print(f"wrote {out_path} and {sidecar}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    _check_reachable(config)
    path, summary = runner.run(config)
    if not args.quiet:
        print(f"results: {path}")
        print(
            "mIoU {miou:.4f}  mIoU(episode-mean) {mem:.4f}  FB-IoU {fb:.4f}  "
            "ok {ok}/{total}".format(
                miou=summary["miou"],
                mem=summary["miou_episode_mean"],
                fb=summary["fb_iou"],
                ok=summary["n_ok"],
                total=summary["n_episodes"],
            )
        )
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    _table, text, _csv_text = report(args.results, args.template, args.out)
    print(text, end="")
    if args.out and not args.quiet:
        print(f"wrote {Path(args.out).with_suffix('.txt')} and {Path(args.out).with_suffix('.csv')}")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    try:
        sweep = json.loads(Path(args.sweep).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigurationError(f"cannot read sweep {args.sweep}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"sweep {args.sweep} is not valid JSON: {exc}") from exc
    if not isinstance(sweep, list) or not all(isinstance(d, dict) for d in sweep):
        raise ConfigurationError("sweep file must be a JSON list of override objects")
    _check_reachable(config)
    outputs = runner.ablate(config, sweep)
    paths = [str(p) for p, _s in outputs]
    _table, text, _csv_text = report(paths, args.template, args.out)
    print(text, end="")
    return 0


def _print_check(name: str, ok: bool, detail: str, notes: list[str]) -> bool:
    status = "PASS" if ok else "FAIL"
    print(f"{status} {name}: {detail}")
    if not ok:
        notes.append(name)
    return ok


def _check_image() -> np.ndarray:
    # fixed 16x12 gradient; any conforming endpoint sees identical bytes
    ys, xs = np.mgrid[0:12, 0:16]
    img = np.stack([(ys * 16) % 256, (xs * 16) % 256, (ys * 8 + xs * 8) % 256], axis=-1)
    return img.astype(np.uint8)


def protocol_check(endpoint: str) -> int:
    client = RemoteSegmenter(endpoint, max_attempts=2)
    failures: list[str] = []
    try:
        caps = client.capabilities()
    except TransportError as exc:
        print(f"FAIL info: {exc}")
        return 3
    except (ProtocolError, CanvasFSSError) as exc:
        _print_check("info", False, str(exc), failures)
        return 2
    ok = isinstance(caps, SegmenterCapabilities) and bool(caps.model_name)
    _print_check("info", ok, f"model_name={caps.model_name!r}", failures)

    image = _check_image()
    request = SegmentRequest(
        image=image,
        box_prompts=(((2, 3, 10, 9), "positive"), ((12, 1, 15, 5), "negative")),
        text="bicycle",
        max_masks=4,
    )
    try:
        masks = client.segment(request)
        detail = f"{len(masks)} mask(s)"
        ok = True
        for sm in masks:
            if sm.mask.size != (12, 16):
                ok, detail = False, f"mask size {sm.mask.size} != (12, 16)"
                break
        scores = [sm.score for sm in masks]
        if ok and scores != sorted(scores, reverse=True):
            ok, detail = False, "scores not descending"
    except (ProtocolError, CanvasFSSError) as exc:
        ok, detail = False, str(exc)
    _print_check("segment", ok, detail, failures)

    if not caps.supports_label_scoring:
        print("SKIP score_labels: unsupported (capability note)")
    else:
        try:
            scores = client.score_labels(image, (2, 3, 10, 9), ["bicycle", "dog", "grass"])
            vals = [s for _l, s in scores]
            ok = len(scores) == 3 and vals == sorted(vals, reverse=True)
            detail = ", ".join(f"{l}={s:g}" for l, s in scores)
        except CapabilityError:
            ok, detail = True, "unsupported (capability note)"
            print(f"SKIP score_labels: {detail}")
            ok = None
        except (ProtocolError, CanvasFSSError) as exc:
            ok, detail = False, str(exc)
        if ok is not None:
            _print_check("score_labels", ok, detail, failures)

    if failures:
        print(f"conformance: FAIL ({', '.join(failures)})")
        return 2
    print("conformance: PASS")
    return 0


def _cmd_protocol_check(args: argparse.Namespace) -> int:
    endpoint = args.backend or os.environ.get(BACKEND_ENV)
    if not endpoint:
        raise ConfigurationError(f"protocol-check needs --backend or {BACKEND_ENV}")
    if not endpoint.startswith(("http://", "https://")):
        raise ConfigurationError(f"protocol-check needs an http(s) endpoint, got {endpoint!r}")
    return protocol_check(endpoint)


_COMMANDS = {
    "compose": _cmd_compose,
    "run": _cmd_run,
    "report": _cmd_report,
    "ablate": _cmd_ablate,
    "protocol-check": _cmd_protocol_check,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    if args.command is None:
        print(parser.format_usage(), file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TransportError as exc:
        print(f"error: backend unreachable: {exc}", file=sys.stderr)
        return 3
    except RunFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CanvasFSSError as exc:
        if getattr(args, "verbose", False):
            raise
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))
