"""Canonical wire codec for the segmentation backend protocol.

Both ends of the wire (this client and any bridge implementation, in any
language) must produce byte-identical JSON for identical payloads, because
conformance is checked against frozen golden files. The canon is:

- UTF-8, no BOM, no trailing newline, compact separators ("," and ":").
- Object keys in the fixed order given by the builders below.
- Non-ASCII characters emitted raw (not \\u-escaped).
- Floats rounded to at most 6 significant digits and printed in their
  shortest decimal form ("1" not "1.0", "0.9" not "0.90000"). Values needing
  exponent notation are outside the protocol's domain (scores live in [0,1]
  and are quantized well above 1e-6).

Masks travel as uncompressed column-major run-length counts, images as
base64 PNG.
"""
from __future__ import annotations

import base64
import json
from typing import Any

from .backends import ScoredMask, SegmenterCapabilities
from .errors import ProtocolError
from .rle import MaskRLE

Box = tuple[int, int, int, int]


def canonical_float(x: float) -> str:
    s = f"{float(x):.6g}"
    if "e" in s or "E" in s:
        raise ProtocolError(f"float {x} needs exponent notation; outside protocol domain")
    return s


def canonical_json(value: Any) -> bytes:
    """Serialize with the fixed canon; dict insertion order is key order."""
    out: list[str] = []

    def emit(v: Any) -> None:
        if v is None:
            out.append("null")
        elif v is True:
            out.append("true")
        elif v is False:
            out.append("false")
        elif isinstance(v, int):
            out.append(str(v))
        elif isinstance(v, float):
            out.append(canonical_float(v))
        elif isinstance(v, str):
            out.append(json.dumps(v, ensure_ascii=False))
        elif isinstance(v, (list, tuple)):
            out.append("[")
            for i, item in enumerate(v):
                if i:
                    out.append(",")
                emit(item)
            out.append("]")
        elif isinstance(v, dict):
            out.append("{")
            for i, (k, item) in enumerate(v.items()):
                if i:
                    out.append(",")
                out.append(json.dumps(str(k), ensure_ascii=False))
                out.append(":")
                emit(item)
            out.append("}")
        else:
            raise ProtocolError(f"cannot serialize {type(v).__name__} canonically")

    emit(value)
    return "".join(out).encode("utf-8")


def parse_json(raw: bytes) -> Any:
    try:
        return json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed JSON body: {exc}") from exc


def _require(obj: dict, key: str, kinds, context: str):
    if not isinstance(obj, dict) or key not in obj:
        raise ProtocolError(f"missing '{key}' in {context}")
    val = obj[key]
    if not isinstance(val, kinds):
        raise ProtocolError(f"'{key}' in {context} has wrong type {type(val).__name__}")
    return val


def _int(obj: dict, key: str, context: str) -> int:
    val = _require(obj, key, int, context)
    if isinstance(val, bool):
        raise ProtocolError(f"'{key}' in {context} has wrong type bool")
    return val


def _number(obj: dict, key: str, context: str) -> float:
    val = _require(obj, key, (int, float), context)
    if isinstance(val, bool):
        raise ProtocolError(f"'{key}' in {context} has wrong type bool")
    return float(val)


def box_to_wire(box: Box, polarity: str) -> dict:
    return {
        "x0": int(box[0]),
        "y0": int(box[1]),
        "x1": int(box[2]),
        "y1": int(box[3]),
        "polarity": polarity,
    }


def box_from_wire(obj: dict, context: str = "box") -> tuple[Box, str]:
    box = tuple(_int(obj, k, context) for k in ("x0", "y0", "x1", "y1"))
    polarity = _require(obj, "polarity", str, context)
    if polarity not in ("positive", "negative"):
        raise ProtocolError(f"unknown polarity {polarity!r} in {context}")
    return box, polarity


def info_to_wire(caps: SegmenterCapabilities) -> dict:
    return {
        "model_name": caps.model_name,
        "supports_text": caps.supports_text,
        "supports_negative_boxes": caps.supports_negative_boxes,
        "supports_label_scoring": caps.supports_label_scoring,
    }


def info_from_wire(obj: Any) -> SegmenterCapabilities:
    name = _require(obj, "model_name", str, "info")
    flags = {}
    for key in ("supports_text", "supports_negative_boxes", "supports_label_scoring"):
        val = _require(obj, key, bool, "info")
        flags[key] = val
    return SegmenterCapabilities(model_name=name, **flags)


def segment_request_to_wire(
    request_id: str,
    image_png: bytes,
    boxes: list[tuple[Box, str]],
    text: str | None,
    max_masks: int,
) -> dict:
    return {
        "request_id": request_id,
        "image_png_b64": base64.b64encode(image_png).decode("ascii"),
        "boxes": [box_to_wire(b, p) for b, p in boxes],
        "text": text,
        "max_masks": int(max_masks),
    }


def segment_request_from_wire(obj: Any) -> dict:
    ctx = "segment request"
    request_id = _require(obj, "request_id", str, ctx)
    png = _require(obj, "image_png_b64", str, ctx)
    try:
        image_png = base64.b64decode(png.encode("ascii"), validate=True)
    except Exception as exc:
        raise ProtocolError(f"invalid base64 image in {ctx}: {exc}") from exc
    raw_boxes = _require(obj, "boxes", list, ctx)
    boxes = [box_from_wire(b, f"{ctx} box {i}") for i, b in enumerate(raw_boxes)]
    text = obj.get("text")
    if text is not None and not isinstance(text, str):
        raise ProtocolError(f"'text' in {ctx} must be string or null")
    max_masks = _int(obj, "max_masks", ctx)
    if max_masks < 1:
        raise ProtocolError(f"max_masks must be >= 1, got {max_masks}")
    return {
        "request_id": request_id,
        "image_png": image_png,
        "boxes": boxes,
        "text": text,
        "max_masks": max_masks,
    }


def mask_to_wire(sm: ScoredMask) -> dict:
    return {
        "size": [sm.mask.size[0], sm.mask.size[1]],
        "counts": list(sm.mask.counts),
        "score": float(sm.score),
    }


def mask_from_wire(obj: dict, context: str = "mask") -> ScoredMask:
    size = _require(obj, "size", list, context)
    if len(size) != 2 or not all(isinstance(v, int) and not isinstance(v, bool) for v in size):
        raise ProtocolError(f"'size' in {context} must be [h, w]")
    counts = _require(obj, "counts", list, context)
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in counts):
        raise ProtocolError(f"'counts' in {context} must be integers")
    score = _number(obj, "score", context)
    mask = MaskRLE(size=(size[0], size[1]), counts=tuple(counts))
    mask.validate()
    if not 0.0 <= score <= 1.0:
        raise ProtocolError(f"score {score} in {context} outside [0,1]")
    return ScoredMask(mask=mask, score=score)


def segment_response_to_wire(request_id: str, masks: list[ScoredMask]) -> dict:
    return {"request_id": request_id, "masks": [mask_to_wire(m) for m in masks]}


def segment_response_from_wire(obj: Any) -> tuple[str, list[ScoredMask]]:
    ctx = "segment response"
    request_id = _require(obj, "request_id", str, ctx)
    raw = _require(obj, "masks", list, ctx)
    masks = [mask_from_wire(m, f"{ctx} mask {i}") for i, m in enumerate(raw)]
    return request_id, masks


def score_labels_request_to_wire(
    request_id: str, image_png: bytes, box: Box, labels: list[str]
) -> dict:
    return {
        "request_id": request_id,
        "image_png_b64": base64.b64encode(image_png).decode("ascii"),
        "box": box_to_wire(box, "positive"),
        "labels": list(labels),
    }


def score_labels_request_from_wire(obj: Any) -> dict:
    ctx = "score_labels request"
    request_id = _require(obj, "request_id", str, ctx)
    png = _require(obj, "image_png_b64", str, ctx)
    try:
        image_png = base64.b64decode(png.encode("ascii"), validate=True)
    except Exception as exc:
        raise ProtocolError(f"invalid base64 image in {ctx}: {exc}") from exc
    box, _pol = box_from_wire(_require(obj, "box", dict, ctx), f"{ctx} box")
    labels = _require(obj, "labels", list, ctx)
    if not labels or not all(isinstance(v, str) for v in labels):
        raise ProtocolError(f"'labels' in {ctx} must be a non-empty string list")
    return {"request_id": request_id, "image_png": image_png, "box": box, "labels": labels}


def score_labels_response_to_wire(request_id: str, scores: list[tuple[str, float]]) -> dict:
    return {
        "request_id": request_id,
        "scores": [{"label": lab, "score": float(s)} for lab, s in scores],
    }


def score_labels_response_from_wire(obj: Any) -> tuple[str, list[tuple[str, float]]]:
    ctx = "score_labels response"
    request_id = _require(obj, "request_id", str, ctx)
    raw = _require(obj, "scores", list, ctx)
    scores = []
    for i, entry in enumerate(raw):
        label = _require(entry, "label", str, f"{ctx} entry {i}")
        score = _number(entry, "score", f"{ctx} entry {i}")
        scores.append((label, score))
    return request_id, scores


def error_to_wire(message: str) -> dict:
    return {"error": message}
