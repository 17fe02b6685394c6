"""Portable Float Map (PFM) depth rasters, grayscale "Pf" only.

The scale line's sign encodes endianness (negative = little-endian); its
magnitude is ignored, values are preserved bit-exactly. PFM stores rows
bottom-up; in memory we always keep rasters top-down.
"""

from __future__ import annotations

import numpy as np

from ..errors import FormatError


def _read_token(f) -> bytes:
    """Read one whitespace-delimited header token."""
    token = b""
    while True:
        c = f.read(1)
        if c == b"":
            raise FormatError("unexpected end of PFM header")
        if c.isspace():
            if token:
                return token
            continue
        token += c


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM into a top-down (H, W) float32 raster."""
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic != b"Pf":
            raise FormatError(f"{path}: expected grayscale PFM magic 'Pf', got {magic!r}")
        try:
            width = int(_read_token(f))
            height = int(_read_token(f))
            scale = float(_read_token(f))
        except ValueError as exc:
            raise FormatError(f"{path}: malformed PFM header: {exc}") from exc
        if width <= 0 or height <= 0:
            raise FormatError(f"{path}: non-positive PFM dimensions {width}x{height}")
        if scale == 0.0:
            raise FormatError(f"{path}: PFM scale line must be non-zero")
        dtype = "<f4" if scale < 0 else ">f4"
        data = f.read(4 * width * height)
        if len(data) != 4 * width * height:
            raise FormatError(f"{path}: truncated PFM payload")
    raster = np.frombuffer(data, dtype=dtype).reshape(height, width)
    # File rows run bottom-up; flip to top-down and drop the byte-order tag.
    return np.flipud(raster).astype(np.float32)


def write_pfm(path, raster: np.ndarray) -> None:
    """Write a top-down (H, W) raster as little-endian grayscale PFM."""
    raster = np.asarray(raster, dtype=np.float32)
    if raster.ndim != 2:
        raise FormatError(f"PFM raster must be 2-D, got ndim={raster.ndim}")
    height, width = raster.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{width} {height}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(raster).astype("<f4").tobytes())
