"""Deterministic PNG serialization for rasters crossing the wire.

Encoding is done by hand (single IDAT, filter type 0 on every row, zlib
level 6) so identical pixels always produce identical bytes; golden
fixtures and cache keys rely on that. Decoding goes through Pillow, which
accepts the wider variety of PNGs found in real datasets.
"""
from __future__ import annotations

import io
import struct
import zlib

import numpy as np
from PIL import Image

from .errors import CodecError

_SIG = b"\x89PNG\r\n\x1a\n"


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def encode_png(pixels: np.ndarray) -> bytes:
    """uint8 raster (H,W,3) RGB or (H,W) grayscale -> deterministic PNG bytes."""
    if pixels.dtype != np.uint8:
        raise CodecError(f"expected uint8 raster, got {pixels.dtype}")
    if pixels.ndim == 3 and pixels.shape[2] == 3:
        color_type = 2
    elif pixels.ndim == 2:
        color_type = 0
    else:
        raise CodecError(f"unsupported raster shape {pixels.shape}")
    h, w = pixels.shape[0], pixels.shape[1]
    if h == 0 or w == 0:
        raise CodecError("empty raster")
    flat = np.ascontiguousarray(pixels).reshape(h, -1)
    raw = bytearray()
    for row in flat:
        raw.append(0)  # filter type 0 keeps output a pure function of pixels
        raw.extend(row.tobytes())
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    comp = zlib.compress(bytes(raw), 6)
    return _SIG + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", comp) + _chunk(b"IEND", b"")


def decode_png(data: bytes) -> np.ndarray:
    """PNG bytes -> (H,W,3) uint8 RGB raster (palette/gray promoted)."""
    try:
        with Image.open(io.BytesIO(data)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise CodecError(f"PNG decode failed: {exc}") from exc


def decode_png_raw(data: bytes) -> np.ndarray:
    """PNG bytes -> raster in its native band layout (no RGB promotion)."""
    try:
        with Image.open(io.BytesIO(data)) as im:
            return np.asarray(im)
    except Exception as exc:
        raise CodecError(f"PNG decode failed: {exc}") from exc
