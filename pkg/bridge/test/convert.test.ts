import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { convertPascal, convertPascalToFile, VOC_CLASSES } from "../src/convertPascal.js";
import { ConversionError } from "../src/errors.js";
import { decodeRleNaive, encodePng, vocPalette } from "./helpers.js";

type Fixture = { id: string; grid: { obj: number[][]; cls: number[][] } };

function writeMask(root: string, kind: string, id: string, rows: number[][], filter = 0): void {
  const height = rows.length;
  const width = rows[0].length;
  const data = new Uint8Array(rows.flat());
  const dir = path.join(root, kind);
  fs.mkdirSync(dir, { recursive: true });
  fs.writeFileSync(
    path.join(dir, `${id}.png`),
    encodePng({ width, height, colorType: 3, data, palette: vocPalette(), filters: filter }),
  );
}

function writeSplit(root: string, name: string, ids: string[]): void {
  const dir = path.join(root, "ImageSets", "Segmentation");
  fs.mkdirSync(dir, { recursive: true });
  fs.writeFileSync(path.join(dir, `${name}.txt`), ids.map((id) => `${id}\n`).join(""));
}

function writeFixture(root: string, fixture: Fixture, filter = 0): void {
  writeMask(root, "SegmentationObject", fixture.id, fixture.grid.obj, filter);
  writeMask(root, "SegmentationClass", fixture.id, fixture.grid.cls, filter);
}

/** Reference pixel set for one instance, straight from the fixture arrays. */
function instancePixels(obj: number[][], value: number): { area: number; mask: Uint8Array } {
  const height = obj.length;
  const width = obj[0].length;
  const mask = new Uint8Array(height * width);
  let area = 0;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      if (obj[y][x] === value) {
        mask[y * width + x] = 1;
        area += 1;
      }
    }
  }
  return { area, mask };
}

describe("convertPascal", () => {
  let vocRoot: string;
  let sdsRoot: string;

  // img_a 7x5: bicycle (instance 1) and person (instance 2), with void edges
  const imgA: Fixture = {
    id: "img_a",
    grid: {
      obj: [
        [255, 0, 0, 0, 0, 0, 255],
        [0, 1, 1, 1, 0, 0, 0],
        [0, 1, 1, 1, 0, 2, 2],
        [0, 0, 0, 0, 0, 2, 2],
        [255, 0, 0, 0, 0, 2, 2],
      ],
      cls: [
        [255, 0, 0, 0, 0, 0, 255],
        [0, 2, 2, 2, 0, 0, 0],
        [0, 2, 2, 2, 0, 15, 15],
        [0, 0, 0, 0, 0, 15, 15],
        [255, 0, 0, 0, 0, 15, 15],
      ],
    },
  };

  // img_b 4x4: tvmonitor (instance 3) plus an all-void instance 9
  const imgB: Fixture = {
    id: "img_b",
    grid: {
      obj: [
        [3, 3, 0, 9],
        [3, 3, 0, 9],
        [0, 0, 0, 0],
        [0, 0, 0, 0],
      ],
      cls: [
        [20, 20, 0, 255],
        [20, 20, 0, 255],
        [0, 0, 0, 0],
        [0, 0, 0, 0],
      ],
    },
  };

  // img_c 3x3: one aeroplane pixel blob
  const imgC: Fixture = {
    id: "img_c",
    grid: {
      obj: [
        [0, 1, 0],
        [1, 1, 1],
        [0, 1, 0],
      ],
      cls: [
        [0, 1, 0],
        [1, 1, 1],
        [0, 1, 0],
      ],
    },
  };

  // img_d 2x3 (SDS only): car
  const imgD: Fixture = {
    id: "img_d",
    grid: {
      obj: [
        [1, 1, 0],
        [1, 0, 0],
      ],
      cls: [
        [7, 7, 0],
        [7, 0, 0],
      ],
    },
  };

  // SDS also ships img_b, deliberately different: the VOC copy must win
  const imgBSds: Fixture = {
    id: "img_b",
    grid: {
      obj: [[1]],
      cls: [[5]],
    },
  };

  beforeAll(() => {
    vocRoot = fs.mkdtempSync(path.join(os.tmpdir(), "voc-"));
    sdsRoot = fs.mkdtempSync(path.join(os.tmpdir(), "sds-"));
    writeSplit(vocRoot, "train", ["img_a", "img_b"]);
    writeSplit(vocRoot, "val", ["img_c"]);
    // each fixture takes a different row filter so decoding is non-trivial
    writeFixture(vocRoot, imgA, 1);
    writeFixture(vocRoot, imgB, 2);
    writeFixture(vocRoot, imgC, 4);
    writeSplit(sdsRoot, "train", ["img_b", "img_d"]);
    writeSplit(sdsRoot, "val", []);
    writeFixture(sdsRoot, imgBSds, 0);
    writeFixture(sdsRoot, imgD, 3);
  });

  afterAll(() => {
    fs.rmSync(vocRoot, { recursive: true, force: true });
    fs.rmSync(sdsRoot, { recursive: true, force: true });
  });

  it("emits exactly the twenty VOC categories with alphabetical ids", () => {
    const { doc } = convertPascal({ vocRoot });
    const categories = doc.categories as { id: number; name: string }[];
    expect(categories).toHaveLength(20);
    expect(categories.map((c) => c.id)).toEqual(Array.from({ length: 20 }, (_, i) => i + 1));
    expect(categories.map((c) => c.name)).toEqual([...VOC_CLASSES]);
    expect(categories[0]).toEqual({ id: 1, name: "aeroplane" });
    expect(categories[19]).toEqual({ id: 20, name: "tvmonitor" });
  });

  it("converts every instance with pixel-exact masks (recount oracle)", () => {
    const { doc, summary } = convertPascal({ vocRoot });
    const images = doc.images as Record<string, number | string>[];
    expect(images).toEqual([
      { id: 1, width: 7, height: 5, file_name: "JPEGImages/img_a.jpg" },
      { id: 2, width: 4, height: 4, file_name: "JPEGImages/img_b.jpg" },
      { id: 3, width: 3, height: 3, file_name: "JPEGImages/img_c.jpg" },
    ]);

    const annotations = doc.annotations as Record<string, unknown>[];
    const expected = [
      { imageId: 1, fixture: imgA, value: 1, category: 2 },
      { imageId: 1, fixture: imgA, value: 2, category: 15 },
      { imageId: 2, fixture: imgB, value: 3, category: 20 },
      { imageId: 3, fixture: imgC, value: 1, category: 1 },
    ];
    expect(annotations).toHaveLength(expected.length);
    expected.forEach((want, i) => {
      const ann = annotations[i];
      const reference = instancePixels(want.fixture.grid.obj, want.value);
      expect(ann.id).toBe(i + 1);
      expect(ann.image_id).toBe(want.imageId);
      expect(ann.category_id).toBe(want.category);
      expect(ann.area).toBe(reference.area);
      expect(ann.iscrowd).toBe(0);
      const seg = ann.segmentation as { size: [number, number]; counts: number[] };
      const decoded = decodeRleNaive(seg.size, seg.counts);
      expect(Buffer.from(decoded)).toEqual(Buffer.from(reference.mask));
    });
    // the all-void instance 9 in img_b votes for nothing and is dropped
    expect(summary.skippedInstances).toBe(1);
    expect(summary).toMatchObject({ images: 3, annotations: 4, categories: 20 });
  });

  it("produces a manifest the harness parses with zero integrity errors", () => {
    const out = path.join(vocRoot, "manifest.json");
    const summary = convertPascalToFile({ vocRoot }, out);
    const probe = spawnSync(
      "python3",
      [
        "-c",
        [
          "import sys",
          "from canvas_fss.manifest import parse_manifest",
          "m = parse_manifest(open(sys.argv[1], 'rb').read())",
          "areas = sorted(a.area for a in m.annotations)",
          "print(len(m.images), len(m.categories), len(m.annotations), areas)",
        ].join("\n"),
        out,
      ],
      { encoding: "utf8" },
    );
    expect(probe.stderr).toBe("");
    expect(probe.status).toBe(0);
    expect(probe.stdout.trim()).toBe(
      `${summary.images} ${summary.categories} ${summary.annotations} [4, 5, 6, 6]`,
    );
  });

  it("honors an explicit split", () => {
    const { doc } = convertPascal({ vocRoot, split: "train" });
    expect((doc.images as { file_name: string }[]).map((im) => im.file_name)).toEqual([
      "JPEGImages/img_a.jpg",
      "JPEGImages/img_b.jpg",
    ]);
  });

  it("merges a second root, primary root winning duplicate ids", () => {
    const { doc } = convertPascal({ vocRoot, sdsRoot });
    const images = doc.images as { width: number; height: number; file_name: string }[];
    expect(images.map((im) => im.file_name)).toEqual([
      "JPEGImages/img_a.jpg",
      "JPEGImages/img_b.jpg",
      "JPEGImages/img_c.jpg",
      "JPEGImages/img_d.jpg",
    ]);
    // img_b keeps the 4x4 VOC version, not the 1x1 SDS rewrite
    expect(images[1]).toMatchObject({ width: 4, height: 4 });
    const annotations = doc.annotations as { image_id: number; category_id: number }[];
    expect(annotations.filter((a) => a.image_id === 4).map((a) => a.category_id)).toEqual([7]);
    expect(annotations.filter((a) => a.image_id === 2).map((a) => a.category_id)).toEqual([20]);
  });

  it("lists every missing mask file in one error", () => {
    const brokenRoot = fs.mkdtempSync(path.join(os.tmpdir(), "voc-broken-"));
    try {
      writeSplit(brokenRoot, "trainval", ["gone", "half"]);
      writeMask(brokenRoot, "SegmentationObject", "half", [[0]]);
      expect(() => convertPascal({ vocRoot: brokenRoot })).toThrow(ConversionError);
      try {
        convertPascal({ vocRoot: brokenRoot });
      } catch (exc) {
        const message = (exc as Error).message;
        expect(message).toContain(path.join("SegmentationObject", "gone.png"));
        expect(message).toContain(path.join("SegmentationClass", "gone.png"));
        expect(message).toContain(path.join("SegmentationClass", "half.png"));
        expect(message).not.toContain(path.join("SegmentationObject", "half.png"));
      }
    } finally {
      fs.rmSync(brokenRoot, { recursive: true, force: true });
    }
  });

  it("errors on a missing split file", () => {
    expect(() => convertPascal({ vocRoot, split: "test" })).toThrow(/missing split file/);
  });

  it("rejects RGB masks", () => {
    const rgbRoot = fs.mkdtempSync(path.join(os.tmpdir(), "voc-rgb-"));
    try {
      writeSplit(rgbRoot, "trainval", ["x"]);
      fs.mkdirSync(path.join(rgbRoot, "SegmentationObject"), { recursive: true });
      fs.mkdirSync(path.join(rgbRoot, "SegmentationClass"), { recursive: true });
      const rgb = encodePng({ width: 2, height: 2, colorType: 2, data: new Uint8Array(12) });
      fs.writeFileSync(path.join(rgbRoot, "SegmentationObject", "x.png"), rgb);
      fs.writeFileSync(path.join(rgbRoot, "SegmentationClass", "x.png"), rgb);
      expect(() => convertPascal({ vocRoot: rgbRoot })).toThrow(/indexed or grayscale/);
    } finally {
      fs.rmSync(rgbRoot, { recursive: true, force: true });
    }
  });

  it("rejects object/class masks of different sizes", () => {
    const badRoot = fs.mkdtempSync(path.join(os.tmpdir(), "voc-dims-"));
    try {
      writeSplit(badRoot, "trainval", ["x"]);
      writeMask(badRoot, "SegmentationObject", "x", [[1, 1]]);
      writeMask(badRoot, "SegmentationClass", "x", [[1], [1]]);
      expect(() => convertPascal({ vocRoot: badRoot })).toThrow(/but class mask is/);
    } finally {
      fs.rmSync(badRoot, { recursive: true, force: true });
    }
  });

  it("rejects class indices beyond the twenty known classes", () => {
    const badRoot = fs.mkdtempSync(path.join(os.tmpdir(), "voc-cls-"));
    try {
      writeSplit(badRoot, "trainval", ["x"]);
      writeMask(badRoot, "SegmentationObject", "x", [[1]]);
      writeMask(badRoot, "SegmentationClass", "x", [[30]]);
      expect(() => convertPascal({ vocRoot: badRoot })).toThrow(/class index 30 out of range/);
    } finally {
      fs.rmSync(badRoot, { recursive: true, force: true });
    }
  });

  it("resolves mixed class votes by majority, ties to the smaller id", () => {
    const voteRoot = fs.mkdtempSync(path.join(os.tmpdir(), "voc-vote-"));
    try {
      writeSplit(voteRoot, "trainval", ["maj", "tie"]);
      // five cat pixels vs three dog pixels -> cat (id 8)
      writeMask(voteRoot, "SegmentationObject", "maj", [[1, 1, 1, 1], [1, 1, 1, 1]]);
      writeMask(voteRoot, "SegmentationClass", "maj", [[8, 8, 8, 8], [8, 12, 12, 12]]);
      // two chair vs two cow -> chair (id 9 < 10)
      writeMask(voteRoot, "SegmentationObject", "tie", [[1, 1, 1, 1]]);
      writeMask(voteRoot, "SegmentationClass", "tie", [[10, 9, 10, 9]]);
      const { doc } = convertPascal({ vocRoot: voteRoot });
      const annotations = doc.annotations as { image_id: number; category_id: number }[];
      expect(annotations.map((a) => a.category_id)).toEqual([8, 9]);
    } finally {
      fs.rmSync(voteRoot, { recursive: true, force: true });
    }
  });
});
