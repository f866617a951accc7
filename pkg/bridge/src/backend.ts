/**
 * Backend contract behind the wire endpoints: a segmenter takes a decoded
 * raster plus box/text prompts and returns scored instance masks. The server
 * validates prompts against image bounds before dispatch, so backends can
 * trust their inputs.
 */
import { ProtocolError } from "./errors.js";
import type { DecodedPng } from "./png.js";
import type { Box, Capabilities, Polarity, ScoredMask } from "./protocol.js";

export type SegmentJob = {
  image: DecodedPng;
  boxes: [Box, Polarity][];
  text: string | null;
  maxMasks: number;
};

export type ScoreJob = {
  image: DecodedPng;
  box: Box;
  labels: string[];
};

export interface Backend {
  /** False answers every endpoint with 503 "model not loaded". */
  ready(): boolean;
  capabilities(): Promise<Capabilities>;
  segment(job: SegmentJob): Promise<ScoredMask[]>;
  scoreLabels(job: ScoreJob): Promise<[string, number][]>;
}

export function checkBoxBounds(box: Box, width: number, height: number): void {
  const [x0, y0, x1, y1] = box;
  if (!(0 <= x0 && x0 < x1 && x1 <= width && 0 <= y0 && y0 < y1 && y1 <= height)) {
    throw new ProtocolError(
      `box (${x0}, ${y0}, ${x1}, ${y1}) outside image bounds ${width}x${height}`,
    );
  }
}

export function checkSegmentJob(job: SegmentJob): void {
  let nPos = 0;
  for (const [box, polarity] of job.boxes) {
    checkBoxBounds(box, job.image.width, job.image.height);
    if (polarity === "positive") nPos += 1;
  }
  if (nPos === 0 && job.text === null) {
    throw new ProtocolError("segment request needs a positive box or a text label");
  }
}
