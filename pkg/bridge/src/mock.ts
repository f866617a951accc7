/**
 * Deterministic model-free backend, byte-compatible with the reference mock
 * the harness ships: /v1/segment answers with the interior of the first
 * positive box (the centered half-size box for text-only requests) at score
 * 0.9, and /v1/score_labels hashes each label with FNV-1a.
 */
import type { Backend, ScoreJob, SegmentJob } from "./backend.js";
import { scoreLabelsMock } from "./fnv.js";
import type { Box, Capabilities, ScoredMask } from "./protocol.js";
import { encodeRle } from "./rle.js";

export class MockBackend implements Backend {
  ready(): boolean {
    return true;
  }

  async capabilities(): Promise<Capabilities> {
    return {
      modelName: "bridge-mock",
      supportsText: true,
      supportsNegativeBoxes: true,
      supportsLabelScoring: true,
    };
  }

  async segment(job: SegmentJob): Promise<ScoredMask[]> {
    const { width: w, height: h } = job.image;
    const positive = job.boxes.find(([, polarity]) => polarity === "positive");
    const box: Box = positive
      ? positive[0]
      : [Math.floor(w / 4), Math.floor(h / 4), Math.floor((3 * w) / 4), Math.floor((3 * h) / 4)];
    const grid = new Uint8Array(h * w);
    for (let y = box[1]; y < box[3]; y++) {
      grid.fill(1, y * w + box[0], y * w + box[2]);
    }
    return [{ mask: encodeRle(grid, h, w), score: 0.9 }].slice(0, job.maxMasks);
  }

  async scoreLabels(job: ScoreJob): Promise<[string, number][]> {
    return scoreLabelsMock(job.labels);
  }
}
