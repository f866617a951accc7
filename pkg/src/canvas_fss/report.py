"""Report tables over finished runs.

Each template turns a set of results files into rows of per-fold mIoU,
mean mIoU and FB-IoU in percent to one decimal, optionally with delta
columns against a designated baseline row (the no-negatives run for the
negative ablation, the ground-truth text scope for the prompt ablation).
Files are grouped into rows by their full config minus the fold index, so
one row spans the folds of one configuration. Every row must cover every
fold any row covers; holes are reported, not papered over.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

from .canvas import LayoutSpec
from .errors import ReportError
from .metrics import ablation_delta
from .protocol import canonical_json
from .runner import _read_results, summarize

TEMPLATES = ("main_table", "negative_ablation", "layout_ablation", "prompt_ablation")

# the published layout grid: six one-shot rows, five five-shot rows
LAYOUT_ABLATION_ROWS: tuple[tuple[str, LayoutSpec], ...] = (
    ("ARP top (padded)", LayoutSpec("ARP_TopPadded", "top", None, 1)),
    ("FR horizontal left 0.5", LayoutSpec("FR_Horizontal", "left", 0.5, 1)),
    ("FR vertical bottom 0.5", LayoutSpec("FR_Vertical", "bottom", 0.5, 1)),
    ("FR vertical bottom 0.6", LayoutSpec("FR_Vertical", "bottom", 0.6, 1)),
    ("FR vertical top 0.5", LayoutSpec("FR_Vertical", "top", 0.5, 1)),
    ("FR vertical top 0.6", LayoutSpec("FR_Vertical", "top", 0.6, 1)),
    ("grid 2x3", LayoutSpec("Grid2x3", "grid", None, 5)),
    ("vertical strip left 0.4", LayoutSpec("VerticalStrip", "left", 0.4, 5)),
    ("horizontal strip top 0.3", LayoutSpec("HorizontalStrip", "top", 0.3, 5)),
    ("inverse L top-left 0.4", LayoutSpec("InverseL", "top_left", 0.4, 5)),
    ("inverse L top-left 0.3", LayoutSpec("InverseL", "top_left", 0.3, 5)),
)

_SCOPE_LABELS = {
    "ground_truth": "ground-truth name",
    "fold_level": "fold-level candidates",
    "dataset_level": "dataset-level candidates",
}


@dataclass(frozen=True)
class ReportRow:
    label: str
    fold_mious: tuple[float, ...]  # percent, aligned with the table's fold list
    mean_miou: float  # percent
    fb_iou: float  # percent
    delta_miou: float | None = None
    delta_fb: float | None = None


@dataclass(frozen=True)
class ReportTable:
    template: str
    folds: tuple[int, ...]
    rows: tuple[ReportRow, ...]
    has_deltas: bool


def _pct(fraction: float) -> float:
    return round(fraction * 100, 1)


def layout_label(layout: dict) -> str:
    ratio = layout.get("ratio")
    tail = f" {ratio:g}" if ratio is not None else ""
    return f"{layout['variant']} {layout['support_position']}{tail}"


def _config_label(config: dict) -> str:
    parts = [layout_label(config["layout"]), f"{config['shot']}-shot"]
    scenario = config["negative_scenario"]
    if scenario["kind"] != "none":
        cap = scenario.get("cap")
        parts.append(f"neg={scenario['kind']}" + (f"<={cap}" if cap is not None else ""))
    if config.get("text_scope"):
        parts.append(f"text={config['text_scope']}")
    return " ".join(parts)


def _scenario_label(config: dict) -> str:
    scenario = config["negative_scenario"]
    if scenario["kind"] == "none":
        return "N_neg=0 (positive only)"
    return f"N_neg<={scenario['cap']} ({scenario['kind']})"


def _scope_label(config: dict) -> str:
    scope = config.get("text_scope")
    return _SCOPE_LABELS.get(scope, "no text prior")


def _group_key(config: dict) -> bytes:
    stripped = {
        k: v
        for k, v in sorted(config.items())
        if k not in ("fold_index", "output_dir", "parallelism")
    }
    return canonical_json(stripped)


def _load_groups(results_files) -> list[tuple[dict, dict[int, dict]]]:
    """[(config of one member, {fold_index: summary})] per row group."""
    groups: dict[bytes, tuple[dict, dict[int, dict]]] = {}
    for path in results_files:
        header, _records = _read_results(Path(path))
        config = header["config"]
        summary = summarize(path)
        key = _group_key(config)
        group = groups.setdefault(key, (config, {}))
        fold = config["fold_index"]
        if fold in group[1]:
            raise ReportError(f"duplicate results for fold {fold}: {path}")
        group[1][fold] = summary
    return list(groups.values())


def build_table(results_files, template: str) -> ReportTable:
    if template not in TEMPLATES:
        raise ReportError(f"unknown template {template!r}; choose from {TEMPLATES}")
    if not results_files:
        raise ReportError("no results files given")
    groups = _load_groups(results_files)

    folds = tuple(sorted({f for _cfg, by_fold in groups for f in by_fold}))
    missing = []
    for config, by_fold in groups:
        gap = [f for f in folds if f not in by_fold]
        if gap:
            missing.append(f"{_config_label(config)}: missing folds {gap}")
    if missing:
        raise ReportError("incomplete fold coverage; " + "; ".join(missing))

    if template == "negative_ablation":
        labeler = _scenario_label
        baseline_pred = lambda cfg: cfg["negative_scenario"]["kind"] == "none"
        order = lambda cfg: (
            cfg["negative_scenario"]["kind"] != "none",
            cfg["negative_scenario"]["cap"] or 0,
            cfg["negative_scenario"]["kind"],
        )
    elif template == "prompt_ablation":
        labeler = _scope_label
        baseline_pred = lambda cfg: cfg.get("text_scope") == "ground_truth"
        scope_rank = {"ground_truth": 0, "fold_level": 1, "dataset_level": 2}
        order = lambda cfg: scope_rank.get(cfg.get("text_scope"), 3)
    elif template == "layout_ablation":
        labeler = lambda cfg: layout_label(cfg["layout"])
        baseline_pred = None
        canon = {
            (s.variant, s.support_position, s.ratio, s.shot): i
            for i, (_lbl, s) in enumerate(LAYOUT_ABLATION_ROWS)
        }
        order = lambda cfg: (
            canon.get(
                (
                    cfg["layout"]["variant"],
                    cfg["layout"]["support_position"],
                    cfg["layout"]["ratio"],
                    cfg["shot"],
                ),
                len(canon),
            ),
            layout_label(cfg["layout"]),
        )
    else:  # main_table
        labeler = _config_label
        baseline_pred = None
        order = _config_label

    groups.sort(key=lambda pair: order(pair[0]))

    baseline = None
    if baseline_pred is not None:
        for config, by_fold in groups:
            if baseline_pred(config):
                baseline = (config, by_fold)
                break
        if baseline is None:
            raise ReportError(f"template {template!r} needs its baseline row in the inputs")

    def row_numbers(by_fold: dict[int, dict]) -> tuple[tuple[float, ...], float, float]:
        per_fold = tuple(_pct(by_fold[f]["miou"]) for f in folds)
        mean = round(
            sum(by_fold[f]["miou"] for f in folds) / len(folds) * 100, 1
        )
        fb = round(sum(by_fold[f]["fb_iou"] for f in folds) / len(folds) * 100, 1)
        return per_fold, mean, fb

    base_mean = base_fb = None
    if baseline is not None:
        _per, base_mean, base_fb = row_numbers(baseline[1])

    rows = []
    for config, by_fold in groups:
        per_fold, mean, fb = row_numbers(by_fold)
        delta_m = delta_f = None
        if baseline is not None and by_fold is not baseline[1]:
            delta_m = ablation_delta(base_mean, mean)
            delta_f = ablation_delta(base_fb, fb)
        rows.append(
            ReportRow(
                label=labeler(config),
                fold_mious=per_fold,
                mean_miou=mean,
                fb_iou=fb,
                delta_miou=delta_m,
                delta_fb=delta_f,
            )
        )
    return ReportTable(
        template=template,
        folds=folds,
        rows=tuple(rows),
        has_deltas=baseline is not None,
    )


def _columns(table: ReportTable) -> list[str]:
    cols = ["configuration"] + [f"fold{f}" for f in table.folds] + ["mean_miou", "fb_iou"]
    if table.has_deltas:
        cols += ["delta_miou", "delta_fb"]
    return cols


def _cells(row: ReportRow, table: ReportTable) -> list[str]:
    def num(x: float | None) -> str:
        return "--" if x is None else f"{x:.1f}"

    cells = [row.label] + [num(v) for v in row.fold_mious] + [num(row.mean_miou), num(row.fb_iou)]
    if table.has_deltas:
        cells += [num(row.delta_miou), num(row.delta_fb)]
    return cells


def render_text(table: ReportTable) -> str:
    header = _columns(table)
    body = [_cells(r, table) for r in table.rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(header)]
    lines = []
    lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip())
    lines.append("  ".join("-" * widths[i] for i in range(len(header))))
    for cells in body:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(cells)).rstrip())
    return "\n".join(lines) + "\n"


def render_csv(table: ReportTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_columns(table))
    for row in table.rows:
        writer.writerow(_cells(row, table))
    return buf.getvalue()


def report(
    results_files, template: str, out_base: str | Path | None = None
) -> tuple[ReportTable, str, str]:
    table = build_table(list(results_files), template)
    text = render_text(table)
    csv_text = render_csv(table)
    if out_base is not None:
        base = Path(out_base)
        base.parent.mkdir(parents=True, exist_ok=True)
        base.with_suffix(".txt").write_text(text, encoding="utf-8")
        base.with_suffix(".csv").write_text(csv_text, encoding="utf-8")
    return table, text, csv_text
