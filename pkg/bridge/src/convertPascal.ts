/**
 * PASCAL VOC segmentation ground truth -> COCO-format instance manifest.
 *
 * VOC ships two indexed PNGs per image: SegmentationObject numbers the
 * instances (1..n, 0 background, 255 void) and SegmentationClass holds the
 * category palette index, which in VOC is exactly the alphabetical class
 * position (aeroplane=1 .. tvmonitor=20). Each instance becomes one
 * annotation whose category is the majority class vote over its pixels;
 * void and background pixels never vote. An optional second root with the
 * same layout (e.g. the SBD extra annotations restructured VOC-style) is
 * merged in, with the primary root winning duplicate ids.
 */
import * as fs from "node:fs";
import * as path from "node:path";

import { ConversionError } from "./errors.js";
import { decodePng, type DecodedPng } from "./png.js";
import { encodeRle } from "./rle.js";

export const VOC_CLASSES = [
  "aeroplane",
  "bicycle",
  "bird",
  "boat",
  "bottle",
  "bus",
  "car",
  "cat",
  "chair",
  "cow",
  "diningtable",
  "dog",
  "horse",
  "motorbike",
  "person",
  "pottedplant",
  "sheep",
  "sofa",
  "train",
  "tvmonitor",
] as const;

const VOID_INDEX = 255;

export type ConvertOptions = {
  vocRoot: string;
  sdsRoot?: string;
  split?: string;
};

export type ConvertSummary = {
  images: number;
  annotations: number;
  categories: number;
  skippedInstances: number;
};

type Source = { vocId: string; root: string };

function parseIds(text: string): string[] {
  return text
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
}

function readSplit(root: string, split: string): string[] {
  const dir = path.join(root, "ImageSets", "Segmentation");
  const candidates =
    split === "trainval" && !fs.existsSync(path.join(dir, "trainval.txt"))
      ? ["train", "val"]
      : [split];
  const ids: string[] = [];
  const seen = new Set<string>();
  let found = false;
  for (const name of candidates) {
    const file = path.join(dir, `${name}.txt`);
    if (!fs.existsSync(file)) continue;
    found = true;
    for (const id of parseIds(fs.readFileSync(file, "utf8"))) {
      if (!seen.has(id)) {
        seen.add(id);
        ids.push(id);
      }
    }
  }
  if (!found) {
    throw new ConversionError(`missing split file ${path.join(dir, `${split}.txt`)}`);
  }
  return ids;
}

function maskGrid(png: DecodedPng, file: string): Uint8Array {
  if (png.channels !== 1) {
    throw new ConversionError(`${file}: expected an indexed or grayscale mask, got RGB`);
  }
  return png.data;
}

/** Majority class over the instance's pixels; ties go to the smaller id. */
function majorityClass(
  instance: Uint8Array,
  value: number,
  classes: Uint8Array,
  file: string,
): number | null {
  const votes = new Array<number>(VOC_CLASSES.length + 1).fill(0);
  for (let i = 0; i < instance.length; i++) {
    if (instance[i] !== value) continue;
    const cls = classes[i];
    if (cls === 0 || cls === VOID_INDEX) continue;
    if (cls > VOC_CLASSES.length) {
      throw new ConversionError(`${file}: class index ${cls} out of range`);
    }
    votes[cls] += 1;
  }
  let winner: number | null = null;
  for (let cls = 1; cls <= VOC_CLASSES.length; cls++) {
    if (votes[cls] > 0 && (winner === null || votes[cls] > votes[winner])) {
      winner = cls;
    }
  }
  return winner;
}

export function convertPascal(options: ConvertOptions): {
  doc: Record<string, unknown>;
  summary: ConvertSummary;
} {
  const split = options.split ?? "trainval";
  const sources: Source[] = readSplit(options.vocRoot, split).map((vocId) => ({
    vocId,
    root: options.vocRoot,
  }));
  if (options.sdsRoot !== undefined) {
    const seen = new Set(sources.map((s) => s.vocId));
    for (const vocId of readSplit(options.sdsRoot, split)) {
      if (!seen.has(vocId)) sources.push({ vocId, root: options.sdsRoot });
    }
  }

  const maskPaths = (s: Source): [string, string] => [
    path.join(s.root, "SegmentationObject", `${s.vocId}.png`),
    path.join(s.root, "SegmentationClass", `${s.vocId}.png`),
  ];
  const missing = sources.flatMap((s) => maskPaths(s).filter((p) => !fs.existsSync(p)));
  if (missing.length > 0) {
    throw new ConversionError(`missing mask files: ${missing.join(", ")}`);
  }

  const images: Record<string, unknown>[] = [];
  const annotations: Record<string, unknown>[] = [];
  let skippedInstances = 0;
  sources.forEach((source, index) => {
    const imageId = index + 1;
    const [objPath, clsPath] = maskPaths(source);
    const obj = decodePng(fs.readFileSync(objPath));
    const cls = decodePng(fs.readFileSync(clsPath));
    if (obj.width !== cls.width || obj.height !== cls.height) {
      throw new ConversionError(
        `${source.vocId}: object mask is ${obj.width}x${obj.height} ` +
          `but class mask is ${cls.width}x${cls.height}`,
      );
    }
    const instanceGrid = maskGrid(obj, objPath);
    const classGrid = maskGrid(cls, clsPath);
    images.push({
      id: imageId,
      width: obj.width,
      height: obj.height,
      file_name: `JPEGImages/${source.vocId}.jpg`,
    });

    const values = [...new Set(instanceGrid)]
      .filter((v) => v !== 0 && v !== VOID_INDEX)
      .sort((a, b) => a - b);
    for (const value of values) {
      const category = majorityClass(instanceGrid, value, classGrid, clsPath);
      if (category === null) {
        skippedInstances += 1;
        continue;
      }
      const grid = new Uint8Array(instanceGrid.length);
      let area = 0;
      let x0 = obj.width;
      let y0 = obj.height;
      let x1 = 0;
      let y1 = 0;
      for (let y = 0; y < obj.height; y++) {
        for (let x = 0; x < obj.width; x++) {
          if (instanceGrid[y * obj.width + x] !== value) continue;
          grid[y * obj.width + x] = 1;
          area += 1;
          if (x < x0) x0 = x;
          if (y < y0) y0 = y;
          if (x >= x1) x1 = x + 1;
          if (y >= y1) y1 = y + 1;
        }
      }
      annotations.push({
        id: annotations.length + 1,
        image_id: imageId,
        category_id: category,
        segmentation: encodeRle(grid, obj.height, obj.width),
        area,
        bbox: [x0, y0, x1 - x0, y1 - y0],
        iscrowd: 0,
      });
    }
  });

  const doc = {
    images,
    annotations,
    categories: VOC_CLASSES.map((name, i) => ({ id: i + 1, name })),
  };
  const summary: ConvertSummary = {
    images: images.length,
    annotations: annotations.length,
    categories: VOC_CLASSES.length,
    skippedInstances,
  };
  return { doc, summary };
}

export function convertPascalToFile(options: ConvertOptions, outPath: string): ConvertSummary {
  const { doc, summary } = convertPascal(options);
  fs.writeFileSync(outPath, JSON.stringify(doc));
  return summary;
}
