/**
 * Fixture builders: a small PNG encoder (with palette support and a choice
 * of row filter, so decoder filter paths get exercised against independently
 * produced bytes) and a naive run-length decoder used as the oracle for the
 * column-major codec.
 */
import * as fs from "node:fs";
import * as path from "node:path";
import { fileURLToPath } from "node:url";
import * as zlib from "node:zlib";

const GOLDEN_DIR = path.resolve(path.dirname(fileURLToPath(import.meta.url)), "../../tests/golden");

export function golden(name: string): Buffer {
  return fs.readFileSync(path.join(GOLDEN_DIR, name));
}

/** The 16x12 gradient every conformance probe sends, as H*W*3 RGB. */
export function checkImageRgb(): { width: number; height: number; data: Uint8Array } {
  const width = 16;
  const height = 12;
  const data = new Uint8Array(width * height * 3);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = 3 * (y * width + x);
      data[i] = (y * 16) % 256;
      data[i + 1] = (x * 16) % 256;
      data[i + 2] = (y * 8 + x * 8) % 256;
    }
  }
  return { width, height, data };
}

function chunk(type: string, payload: Buffer): Buffer {
  const head = Buffer.alloc(4);
  head.writeUInt32BE(payload.length);
  const body = Buffer.concat([Buffer.from(type, "latin1"), payload]);
  const crc = Buffer.alloc(4);
  crc.writeUInt32BE(zlib.crc32(body) >>> 0);
  return Buffer.concat([head, body, crc]);
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

export type EncodeSpec = {
  width: number;
  height: number;
  colorType: 0 | 2 | 3;
  /** Row-major samples; palette images hold indices. */
  data: Uint8Array;
  palette?: Uint8Array;
  /** Filter type per row, or one type for all rows (default 0). */
  filters?: number | number[];
};

export function encodePng(spec: EncodeSpec): Buffer {
  const channels = spec.colorType === 2 ? 3 : 1;
  const stride = spec.width * channels;
  if (spec.data.length !== stride * spec.height) {
    throw new Error(`data has ${spec.data.length} bytes, expected ${stride * spec.height}`);
  }
  const filtered = Buffer.alloc((stride + 1) * spec.height);
  for (let y = 0; y < spec.height; y++) {
    const filter = Array.isArray(spec.filters)
      ? spec.filters[y % spec.filters.length]
      : (spec.filters ?? 0);
    filtered[(stride + 1) * y] = filter;
    for (let x = 0; x < stride; x++) {
      const raw = spec.data[stride * y + x];
      const left = x >= channels ? spec.data[stride * y + x - channels] : 0;
      const up = y > 0 ? spec.data[stride * (y - 1) + x] : 0;
      const upLeft = y > 0 && x >= channels ? spec.data[stride * (y - 1) + x - channels] : 0;
      let v: number;
      switch (filter) {
        case 0:
          v = raw;
          break;
        case 1:
          v = raw - left;
          break;
        case 2:
          v = raw - up;
          break;
        case 3:
          v = raw - ((left + up) >> 1);
          break;
        case 4:
          v = raw - paeth(left, up, upLeft);
          break;
        default:
          throw new Error(`unknown filter ${filter}`);
      }
      filtered[(stride + 1) * y + 1 + x] = v & 0xff;
    }
  }

  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(spec.width, 0);
  ihdr.writeUInt32BE(spec.height, 4);
  ihdr[8] = 8;
  ihdr[9] = spec.colorType;
  const parts = [
    Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]),
    chunk("IHDR", ihdr),
  ];
  if (spec.colorType === 3) {
    if (!spec.palette) throw new Error("palette image needs a palette");
    parts.push(chunk("PLTE", Buffer.from(spec.palette)));
  }
  parts.push(chunk("IDAT", zlib.deflateSync(filtered)), chunk("IEND", Buffer.alloc(0)));
  return Buffer.concat(parts);
}

/** The standard VOC palette prefix: index 0 black, 1..20 arbitrary colors. */
export function vocPalette(): Uint8Array {
  const palette = new Uint8Array(256 * 3);
  for (let i = 1; i < 256; i++) {
    palette[3 * i] = (i * 37) % 256;
    palette[3 * i + 1] = (i * 91) % 256;
    palette[3 * i + 2] = (i * 151) % 256;
  }
  return palette;
}

/** Expand column-major runs into a row-major 0/1 grid, the slow honest way. */
export function decodeRleNaive(size: [number, number], counts: number[]): Uint8Array {
  const [h, w] = size;
  const flat: number[] = [];
  let value = 0;
  for (const run of counts) {
    for (let i = 0; i < run; i++) flat.push(value);
    value ^= 1;
  }
  if (flat.length !== h * w) {
    throw new Error(`runs cover ${flat.length} pixels, expected ${h * w}`);
  }
  const grid = new Uint8Array(h * w);
  for (let i = 0; i < flat.length; i++) {
    const row = i % h;
    const col = Math.floor(i / h);
    grid[row * w + col] = flat[i];
  }
  return grid;
}
