"""Binary 8-bit PGM (P5) reading and writing."""

import numpy as np


def _tokens(data):
    """Yield (token, end_offset) header tokens, skipping comments."""
    pos = 0
    while True:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        yield data[start:pos], pos


def read_pgm_bytes(path):
    """Raw uint8 pixels of a P5 file as an (H, W) array."""
    with open(path, "rb") as fh:
        data = fh.read()
    tok = _tokens(data)
    magic, _ = next(tok)
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {magic!r})")
    width, _ = next(tok)
    height, _ = next(tok)
    maxval, end = next(tok)
    w, h, mv = int(width), int(height), int(maxval)
    if mv != 255:
        raise ValueError(f"{path}: only 8-bit PGM (maxval 255) is supported, got {mv}")
    start = end + 1  # single whitespace byte after maxval
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=start)
    return pixels.reshape(h, w).copy()


def write_pgm_bytes(path, pixels):
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.dtype != np.uint8:
        raise ValueError("expected a 2-D uint8 array")
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(pixels).tobytes())


def quantize(values):
    """Map [0, 1] intensities to uint8 by rounding ``v * 255``."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.rint(v * 255.0).astype(np.uint8)


def read_pgm(path):
    """Intensities in [0, 1] as float32 (pixel / 255)."""
    return (read_pgm_bytes(path).astype(np.float32) / np.float32(255.0))


def write_pgm(path, values):
    write_pgm_bytes(path, quantize(values))
