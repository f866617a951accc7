/**
 * Column-major run-length mask encoding: counts[0] is the initial background
 * run (0 when pixel (0,0) is foreground), runs alternate background and
 * foreground, and flat index i maps to pixel (row = i % h, col = i / h).
 */
import type { MaskRle } from "./protocol.js";

/** Encode a row-major 0/1 grid (grid[y * width + x]) into canonical runs. */
export function encodeRle(grid: Uint8Array, height: number, width: number): MaskRle {
  if (grid.length !== height * width) {
    throw new RangeError(`grid has ${grid.length} pixels, expected ${height * width}`);
  }
  const counts: number[] = [];
  let current = 0;
  let run = 0;
  for (let x = 0; x < width; x++) {
    for (let y = 0; y < height; y++) {
      const v = grid[y * width + x] ? 1 : 0;
      if (v === current) {
        run += 1;
      } else {
        counts.push(run);
        current = v;
        run = 1;
      }
    }
  }
  counts.push(run);
  return { size: [height, width], counts };
}

export function maskArea(counts: number[]): number {
  let area = 0;
  for (let i = 1; i < counts.length; i += 2) area += counts[i];
  return area;
}
