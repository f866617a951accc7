/**
 * Minimal PNG decoder for the rasters this bridge actually meets: the
 * harness's own 8-bit grayscale/RGB request images and the 8-bit palette
 * masks shipped with PASCAL VOC. Interlacing, 16-bit and sub-byte depths
 * are out of scope and rejected loudly rather than mis-decoded.
 */
import * as zlib from "node:zlib";

import { CodecError } from "./errors.js";

const SIGNATURE = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

const CHANNELS: Record<number, number> = { 0: 1, 2: 3, 3: 1 };

export type DecodedPng = {
  width: number;
  height: number;
  colorType: number;
  channels: number;
  /** Row-major samples, `channels` interleaved; palette images hold indices. */
  data: Uint8Array;
  /** RGB triples, only for colorType 3. */
  palette?: Uint8Array;
};

type Chunk = { type: string; data: Buffer };

function* chunks(buf: Buffer): Generator<Chunk> {
  let off = SIGNATURE.length;
  while (off < buf.length) {
    if (off + 8 > buf.length) {
      throw new CodecError("PNG decode failed: truncated chunk header");
    }
    const length = buf.readUInt32BE(off);
    const type = buf.toString("latin1", off + 4, off + 8);
    const end = off + 8 + length;
    if (end + 4 > buf.length) {
      throw new CodecError(`PNG decode failed: truncated ${type} chunk`);
    }
    const data = buf.subarray(off + 8, end);
    const crc = buf.readUInt32BE(end);
    const actual = zlib.crc32(data, zlib.crc32(buf.subarray(off + 4, off + 8))) >>> 0;
    if (crc !== actual) {
      throw new CodecError(`PNG decode failed: CRC mismatch in ${type} chunk`);
    }
    yield { type, data };
    off = end + 4;
  }
  throw new CodecError("PNG decode failed: missing IEND chunk");
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

function defilter(raw: Buffer, width: number, height: number, bpp: number): Uint8Array {
  const stride = width * bpp;
  if (raw.length !== (stride + 1) * height) {
    throw new CodecError(
      `PNG decode failed: expected ${(stride + 1) * height} filtered bytes, got ${raw.length}`,
    );
  }
  const out = new Uint8Array(stride * height);
  for (let y = 0; y < height; y++) {
    const filter = raw[(stride + 1) * y];
    const src = (stride + 1) * y + 1;
    const dst = stride * y;
    for (let x = 0; x < stride; x++) {
      const left = x >= bpp ? out[dst + x - bpp] : 0;
      const up = y > 0 ? out[dst + x - stride] : 0;
      const upLeft = y > 0 && x >= bpp ? out[dst + x - stride - bpp] : 0;
      let v = raw[src + x];
      switch (filter) {
        case 0:
          break;
        case 1:
          v += left;
          break;
        case 2:
          v += up;
          break;
        case 3:
          v += (left + up) >> 1;
          break;
        case 4:
          v += paeth(left, up, upLeft);
          break;
        default:
          throw new CodecError(`PNG decode failed: unknown filter type ${filter}`);
      }
      out[dst + x] = v & 0xff;
    }
  }
  return out;
}

export function decodePng(buf: Buffer): DecodedPng {
  if (!buf.subarray(0, SIGNATURE.length).equals(SIGNATURE)) {
    throw new CodecError("PNG decode failed: bad signature");
  }
  let header: { width: number; height: number; bitDepth: number; colorType: number } | null =
    null;
  let palette: Uint8Array | undefined;
  const idat: Buffer[] = [];
  for (const chunk of chunks(buf)) {
    if (chunk.type === "IHDR") {
      if (chunk.data.length !== 13) {
        throw new CodecError("PNG decode failed: malformed IHDR");
      }
      header = {
        width: chunk.data.readUInt32BE(0),
        height: chunk.data.readUInt32BE(4),
        bitDepth: chunk.data[8],
        colorType: chunk.data[9],
      };
      const [compression, filterMethod, interlace] = [
        chunk.data[10],
        chunk.data[11],
        chunk.data[12],
      ];
      if (compression !== 0 || filterMethod !== 0) {
        throw new CodecError("PNG decode failed: unknown compression or filter method");
      }
      if (interlace !== 0) {
        throw new CodecError("PNG decode failed: interlaced images unsupported");
      }
    } else if (chunk.type === "PLTE") {
      if (chunk.data.length % 3 !== 0 || chunk.data.length > 256 * 3) {
        throw new CodecError("PNG decode failed: malformed PLTE");
      }
      palette = new Uint8Array(chunk.data);
    } else if (chunk.type === "IDAT") {
      idat.push(chunk.data);
    } else if (chunk.type === "IEND") {
      break;
    }
    // ancillary chunks (tEXt, pHYs, ...) carry nothing we need
  }
  if (header === null) {
    throw new CodecError("PNG decode failed: missing IHDR");
  }
  const { width, height, bitDepth, colorType } = header;
  if (width < 1 || height < 1) {
    throw new CodecError("PNG decode failed: empty raster");
  }
  if (!(colorType in CHANNELS)) {
    throw new CodecError(`PNG decode failed: unsupported color type ${colorType}`);
  }
  if (bitDepth !== 8) {
    throw new CodecError(`PNG decode failed: unsupported bit depth ${bitDepth}`);
  }
  if (colorType === 3 && palette === undefined) {
    throw new CodecError("PNG decode failed: palette image without PLTE");
  }
  if (idat.length === 0) {
    throw new CodecError("PNG decode failed: no IDAT data");
  }
  let raw: Buffer;
  try {
    raw = zlib.inflateSync(Buffer.concat(idat));
  } catch (exc) {
    throw new CodecError(`PNG decode failed: ${exc}`);
  }
  const channels = CHANNELS[colorType];
  const data = defilter(raw, width, height, channels);
  return { width, height, colorType, channels, data, palette };
}

/** Decoded image as (H*W*3) row-major RGB, promoting gray and palette. */
export function toRgb(png: DecodedPng): Uint8Array {
  const { width, height, colorType, data, palette } = png;
  if (colorType === 2) return data;
  const rgb = new Uint8Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    const v = data[i];
    if (colorType === 0) {
      rgb[3 * i] = v;
      rgb[3 * i + 1] = v;
      rgb[3 * i + 2] = v;
    } else {
      const p = 3 * v;
      if (p + 2 >= palette!.length) {
        throw new CodecError(`PNG decode failed: palette index ${v} out of range`);
      }
      rgb[3 * i] = palette![p];
      rgb[3 * i + 1] = palette![p + 1];
      rgb[3 * i + 2] = palette![p + 2];
    }
  }
  return rgb;
}
