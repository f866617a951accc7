"""Pure-numpy reference implementations of the hot kernels.

Arithmetic here is kept expression-for-expression identical to the numba
twin so both paths produce bit-identical outputs.
"""
from __future__ import annotations

import numpy as np


def rle_decode_flat(counts: np.ndarray, total: int) -> np.ndarray:
    """Expand run lengths into a flat boolean vector (even runs background)."""
    values = np.zeros(len(counts), dtype=np.bool_)
    values[1::2] = True
    flat = np.repeat(values, counts)
    if flat.size != total:
        # caller validates; keep the contract explicit here too
        raise ValueError(f"run lengths sum to {flat.size}, expected {total}")
    return flat


def rle_encode_flat(flat: np.ndarray) -> np.ndarray:
    """Run lengths of a flat boolean vector, first run background (may be 0)."""
    n = flat.size
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate((np.zeros(1, dtype=np.int64), changes, np.array([n])))
    counts = np.diff(bounds).astype(np.int64)
    if flat[0]:
        counts = np.concatenate((np.zeros(1, dtype=np.int64), counts))
    return counts


def bilinear_rgb(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize an RGB uint8 raster with half-pixel-center bilinear sampling."""
    sh, sw = src.shape[0], src.shape[1]
    scale_y = sh / out_h
    scale_x = sw / out_w
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * scale_y - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * scale_x - 0.5
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    wy = ys - y0
    wx = xs - x0
    y0i = y0.astype(np.int64)
    x0i = x0.astype(np.int64)
    y0c = np.clip(y0i, 0, sh - 1)
    y1c = np.clip(y0i + 1, 0, sh - 1)
    x0c = np.clip(x0i, 0, sw - 1)
    x1c = np.clip(x0i + 1, 0, sw - 1)

    srcf = src.astype(np.float64)
    a = srcf[y0c][:, x0c]
    b = srcf[y0c][:, x1c]
    c = srcf[y1c][:, x0c]
    d = srcf[y1c][:, x1c]
    wxg = wx[None, :, None]
    wyg = wy[:, None, None]
    top = a * (1.0 - wxg) + b * wxg
    bot = c * (1.0 - wxg) + d * wxg
    out = top * (1.0 - wyg) + bot * wyg
    return np.rint(out).astype(np.uint8)


def nearest_mask(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a boolean mask with nearest-neighbor sampling at pixel centers."""
    sh, sw = src.shape
    scale_y = sh / out_h
    scale_x = sw / out_w
    ys = ((np.arange(out_h, dtype=np.float64) + 0.5) * scale_y).astype(np.int64)
    xs = ((np.arange(out_w, dtype=np.float64) + 0.5) * scale_x).astype(np.int64)
    ys = np.minimum(ys, sh - 1)
    xs = np.minimum(xs, sw - 1)
    return src[ys][:, xs]


def confusion_counts(pred: np.ndarray, gt: np.ndarray) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn) pixel tallies for two boolean masks of equal shape."""
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    tn = int(pred.size) - tp - fp - fn
    return tp, fp, fn, tn


def polygon_mask(xs: np.ndarray, ys: np.ndarray, h: int, w: int) -> np.ndarray:
    """Rasterize one simple polygon by even-odd pixel-center containment.

    A pixel center (c+0.5, r+0.5) is inside when the number of edge
    crossings strictly to its right is odd (half-open rule on y).
    """
    out = np.zeros((h, w), dtype=np.bool_)
    n = len(xs)
    col_centers = np.arange(w, dtype=np.float64) + 0.5
    for r in range(h):
        py = r + 0.5
        crossings = []
        for i in range(n):
            j = (i + 1) % n
            y1, y2 = ys[i], ys[j]
            if (y1 <= py < y2) or (y2 <= py < y1):
                t = (py - y1) / (y2 - y1)
                crossings.append(xs[i] + t * (xs[j] - xs[i]))
        if not crossings:
            continue
        cr = np.sort(np.asarray(crossings, dtype=np.float64))
        greater = len(cr) - np.searchsorted(cr, col_centers, side="right")
        out[r] = (greater % 2) == 1
    return out
