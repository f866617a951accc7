/**
 * Canonical wire codec, byte-compatible with the Python harness.
 *
 * The canon: UTF-8, no trailing newline, compact separators, object keys in
 * builder order, non-ASCII raw, floats in shortest %.6g form with exponent
 * notation rejected (scores live in [0,1], quantized well above 1e-6).
 */
import { ProtocolError } from "./errors.js";

export type Box = [number, number, number, number];
export type Polarity = "positive" | "negative";
export type MaskRle = { size: [number, number]; counts: number[] };
export type ScoredMask = { mask: MaskRle; score: number };

export type Capabilities = {
  modelName: string;
  supportsText: boolean;
  supportsNegativeBoxes: boolean;
  supportsLabelScoring: boolean;
};

export type SegmentRequest = {
  requestId: string;
  imagePng: Buffer;
  boxes: [Box, Polarity][];
  text: string | null;
  maxMasks: number;
};

export type ScoreLabelsRequest = {
  requestId: string;
  imagePng: Buffer;
  box: Box;
  labels: string[];
};

export function canonicalFloat(x: number): string {
  if (!Number.isFinite(x)) {
    throw new ProtocolError(`cannot serialize non-finite float ${x}`);
  }
  if (x === 0) return "0";
  // %g decides decimal-vs-exponent from the exponent AFTER rounding to six
  // significant digits; toExponential(5) applies the same rounding
  const exp = Number(x.toExponential(5).split("e")[1]);
  if (exp < -4 || exp >= 6) {
    throw new ProtocolError(`float ${x} needs exponent notation; outside protocol domain`);
  }
  let s = x.toPrecision(6);
  if (s.includes(".")) s = s.replace(/\.?0+$/, "");
  return s;
}

function emit(value: unknown, out: string[]): void {
  if (value === null) {
    out.push("null");
  } else if (value === true) {
    out.push("true");
  } else if (value === false) {
    out.push("false");
  } else if (typeof value === "number") {
    out.push(Number.isInteger(value) ? String(value) : canonicalFloat(value));
  } else if (typeof value === "string") {
    out.push(JSON.stringify(value));
  } else if (Array.isArray(value)) {
    out.push("[");
    value.forEach((item, i) => {
      if (i) out.push(",");
      emit(item, out);
    });
    out.push("]");
  } else if (typeof value === "object") {
    out.push("{");
    Object.entries(value as Record<string, unknown>).forEach(([k, item], i) => {
      if (i) out.push(",");
      out.push(JSON.stringify(k), ":");
      emit(item, out);
    });
    out.push("}");
  } else {
    throw new ProtocolError(`cannot serialize ${typeof value} canonically`);
  }
}

export function canonicalJson(value: unknown): Buffer {
  const out: string[] = [];
  emit(value, out);
  return Buffer.from(out.join(""), "utf8");
}

export function parseJson(raw: Buffer): unknown {
  let text: string;
  try {
    text = new TextDecoder("utf-8", { fatal: true }).decode(raw);
  } catch (exc) {
    throw new ProtocolError(`malformed JSON body: ${exc}`);
  }
  try {
    return JSON.parse(text);
  } catch (exc) {
    throw new ProtocolError(`malformed JSON body: ${exc}`);
  }
}

type Dict = Record<string, unknown>;

function require_(obj: unknown, key: string, kind: string, context: string): unknown {
  if (typeof obj !== "object" || obj === null || Array.isArray(obj) || !(key in obj)) {
    throw new ProtocolError(`missing '${key}' in ${context}`);
  }
  const val = (obj as Dict)[key];
  const actual = Array.isArray(val) ? "array" : typeof val;
  if (actual !== kind) {
    throw new ProtocolError(`'${key}' in ${context} has wrong type ${actual}`);
  }
  return val;
}

function requireInt(obj: unknown, key: string, context: string): number {
  const val = require_(obj, key, "number", context) as number;
  if (!Number.isInteger(val)) {
    throw new ProtocolError(`'${key}' in ${context} must be an integer`);
  }
  return val;
}

function requireNumber(obj: unknown, key: string, context: string): number {
  return require_(obj, key, "number", context) as number;
}

export function boxToWire(box: Box, polarity: Polarity): Dict {
  return { x0: box[0], y0: box[1], x1: box[2], y1: box[3], polarity };
}

export function boxFromWire(obj: unknown, context = "box"): [Box, Polarity] {
  const box = (["x0", "y0", "x1", "y1"] as const).map((k) =>
    requireInt(obj, k, context),
  ) as Box;
  const polarity = require_(obj, "polarity", "string", context) as string;
  if (polarity !== "positive" && polarity !== "negative") {
    throw new ProtocolError(`unknown polarity '${polarity}' in ${context}`);
  }
  return [box, polarity];
}

export function infoToWire(caps: Capabilities): Dict {
  return {
    model_name: caps.modelName,
    supports_text: caps.supportsText,
    supports_negative_boxes: caps.supportsNegativeBoxes,
    supports_label_scoring: caps.supportsLabelScoring,
  };
}

function decodeBase64(value: string, context: string): Buffer {
  if (!/^[A-Za-z0-9+/]*={0,2}$/.test(value) || value.length % 4 !== 0) {
    throw new ProtocolError(`invalid base64 image in ${context}`);
  }
  return Buffer.from(value, "base64");
}

export function segmentRequestFromWire(obj: unknown): SegmentRequest {
  const ctx = "segment request";
  const requestId = require_(obj, "request_id", "string", ctx) as string;
  const imagePng = decodeBase64(require_(obj, "image_png_b64", "string", ctx) as string, ctx);
  const rawBoxes = require_(obj, "boxes", "array", ctx) as unknown[];
  const boxes = rawBoxes.map((b, i) => boxFromWire(b, `${ctx} box ${i}`));
  const text = (obj as Dict)["text"] ?? null;
  if (text !== null && typeof text !== "string") {
    throw new ProtocolError(`'text' in ${ctx} must be string or null`);
  }
  const maxMasks = requireInt(obj, "max_masks", ctx);
  if (maxMasks < 1) {
    throw new ProtocolError(`max_masks must be >= 1, got ${maxMasks}`);
  }
  return { requestId, imagePng, boxes, text, maxMasks };
}

export function maskToWire(sm: ScoredMask): Dict {
  return {
    size: [sm.mask.size[0], sm.mask.size[1]],
    counts: [...sm.mask.counts],
    score: sm.score,
  };
}

export function segmentResponseToWire(requestId: string, masks: ScoredMask[]): Dict {
  return { request_id: requestId, masks: masks.map(maskToWire) };
}

export function scoreLabelsRequestFromWire(obj: unknown): ScoreLabelsRequest {
  const ctx = "score_labels request";
  const requestId = require_(obj, "request_id", "string", ctx) as string;
  const imagePng = decodeBase64(require_(obj, "image_png_b64", "string", ctx) as string, ctx);
  const [box] = boxFromWire(require_(obj, "box", "object", ctx), `${ctx} box`);
  const labels = require_(obj, "labels", "array", ctx) as unknown[];
  if (labels.length === 0 || !labels.every((v) => typeof v === "string")) {
    throw new ProtocolError(`'labels' in ${ctx} must be a non-empty string list`);
  }
  return { requestId, imagePng, box, labels: labels as string[] };
}

export function scoreLabelsResponseToWire(
  requestId: string,
  scores: [string, number][],
): Dict {
  return {
    request_id: requestId,
    scores: scores.map(([label, score]) => ({ label, score })),
  };
}

export function errorToWire(message: string): Dict {
  return { error: message };
}
