"""Binary PGM (P5) reader and writer."""
from __future__ import annotations

import os

import numpy as np

__all__ = ["read_pgm", "write_pgm", "encode_pgm", "decode_pgm", "PgmError"]


class PgmError(ValueError):
    pass


def _tokens(buf: bytes, count: int, pos: int):
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    out = []
    n = len(buf)
    while len(out) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PgmError("truncated PGM header")
        out.append(buf[start:pos])
    return out, pos


def decode_pgm(buf: bytes) -> np.ndarray:
    if buf[:2] != b"P5":
        raise PgmError("not a binary PGM (missing P5 magic)")
    (w, h, maxval), pos = _tokens(buf, 3, 2)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise PgmError("malformed PGM header") from None
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise PgmError(f"invalid PGM dimensions {w}x{h} / maxval {maxval}")
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise PgmError("malformed PGM header")
    pos += 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    need = w * h * dtype.itemsize
    raster = buf[pos:pos + need]
    if len(raster) < need:
        raise PgmError(f"truncated raster: expected {need} bytes, got {len(raster)}")
    img = np.frombuffer(raster, dtype=dtype).reshape(h, w).astype(np.float64)
    if maxval != 255:
        img *= 255.0 / maxval
    return img


def encode_pgm(image) -> bytes:
    """8-bit P5 bytes; values are clamped to [0, 255] and rounded half away from zero."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a nonempty 2-D image, got shape {img.shape}")
    pix = np.floor(np.clip(np.nan_to_num(img, nan=0.0), 0.0, 255.0) + 0.5).astype(np.uint8)
    h, w = pix.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes()


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def write_pgm(path, image) -> None:
    data = encode_pgm(image)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
