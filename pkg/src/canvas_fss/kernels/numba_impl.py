"""Numba-jitted twins of the numpy kernels.

Loop bodies replicate the numpy expressions exactly (same operand order,
same dtypes) so the two paths agree bit-for-bit.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def rle_decode_flat(counts: np.ndarray, total: int) -> np.ndarray:
    flat = np.zeros(total, dtype=np.bool_)
    pos = 0
    fg = False
    for k in range(counts.shape[0]):
        c = counts[k]
        if fg:
            for i in range(pos, pos + c):
                flat[i] = True
        pos += c
        fg = not fg
    if pos != total:
        raise ValueError("run lengths do not sum to the mask size")
    return flat


@njit(cache=True)
def rle_encode_flat(flat: np.ndarray) -> np.ndarray:
    n = flat.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    nruns = 1
    for i in range(1, n):
        if flat[i] != flat[i - 1]:
            nruns += 1
    lead = 1 if flat[0] else 0
    counts = np.zeros(nruns + lead, dtype=np.int64)
    idx = lead
    run = 1
    for i in range(1, n):
        if flat[i] != flat[i - 1]:
            counts[idx] = run
            idx += 1
            run = 1
        else:
            run += 1
    counts[idx] = run
    return counts


@njit(cache=True)
def bilinear_rgb(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    sh, sw = src.shape[0], src.shape[1]
    scale_y = sh / out_h
    scale_x = sw / out_w
    out = np.empty((out_h, out_w, 3), dtype=np.uint8)
    for r in range(out_h):
        y = (r + 0.5) * scale_y - 0.5
        y0 = np.floor(y)
        wy = y - y0
        y0i = int(y0)
        y0c = min(max(y0i, 0), sh - 1)
        y1c = min(max(y0i + 1, 0), sh - 1)
        for c in range(out_w):
            x = (c + 0.5) * scale_x - 0.5
            x0 = np.floor(x)
            wx = x - x0
            x0i = int(x0)
            x0c = min(max(x0i, 0), sw - 1)
            x1c = min(max(x0i + 1, 0), sw - 1)
            for ch in range(3):
                a = float(src[y0c, x0c, ch])
                b = float(src[y0c, x1c, ch])
                cc = float(src[y1c, x0c, ch])
                d = float(src[y1c, x1c, ch])
                top = a * (1.0 - wx) + b * wx
                bot = cc * (1.0 - wx) + d * wx
                v = top * (1.0 - wy) + bot * wy
                out[r, c, ch] = np.uint8(np.rint(v))
    return out


@njit(cache=True)
def nearest_mask(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    sh, sw = src.shape
    scale_y = sh / out_h
    scale_x = sw / out_w
    out = np.empty((out_h, out_w), dtype=np.bool_)
    for r in range(out_h):
        sy = int((r + 0.5) * scale_y)
        if sy > sh - 1:
            sy = sh - 1
        for c in range(out_w):
            sx = int((c + 0.5) * scale_x)
            if sx > sw - 1:
                sx = sw - 1
            out[r, c] = src[sy, sx]
    return out


@njit(cache=True)
def confusion_counts(pred: np.ndarray, gt: np.ndarray) -> tuple:
    tp = 0
    fp = 0
    fn = 0
    tn = 0
    h, w = pred.shape
    for r in range(h):
        for c in range(w):
            p = pred[r, c]
            g = gt[r, c]
            if p and g:
                tp += 1
            elif p:
                fp += 1
            elif g:
                fn += 1
            else:
                tn += 1
    return tp, fp, fn, tn


@njit(cache=True)
def polygon_mask(xs: np.ndarray, ys: np.ndarray, h: int, w: int) -> np.ndarray:
    out = np.zeros((h, w), dtype=np.bool_)
    n = xs.shape[0]
    crossings = np.empty(n, dtype=np.float64)
    for r in range(h):
        py = r + 0.5
        m = 0
        for i in range(n):
            j = (i + 1) % n
            y1 = ys[i]
            y2 = ys[j]
            if (y1 <= py < y2) or (y2 <= py < y1):
                t = (py - y1) / (y2 - y1)
                crossings[m] = xs[i] + t * (xs[j] - xs[i])
                m += 1
        if m == 0:
            continue
        for c in range(w):
            px = c + 0.5
            greater = 0
            for k in range(m):
                if crossings[k] > px:
                    greater += 1
            if greater % 2 == 1:
                out[r, c] = True
    return out
