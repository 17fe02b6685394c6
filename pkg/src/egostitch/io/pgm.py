"""Binary PGM (P5) masks with the strict 0/255 export contract.

Any payload byte other than 0 or 255 is a format error; masks are a
bit-level contract, not grayscale images.
"""

from __future__ import annotations

import numpy as np

from ..errors import FormatError
from ..geometry import BinaryMask


def _read_header_token(f) -> bytes:
    """Read one PGM header token, skipping whitespace and # comments."""
    token = b""
    while True:
        c = f.read(1)
        if c == b"":
            raise FormatError("unexpected end of PGM header")
        if c == b"#" and not token:
            while c not in (b"\n", b""):
                c = f.read(1)
            continue
        if c.isspace():
            if token:
                return token
            continue
        token += c


def load_mask(path) -> BinaryMask:
    """Read a strict binary mask: byte 255 -> 1, byte 0 -> 0."""
    with open(path, "rb") as f:
        magic = _read_header_token(f)
        if magic != b"P5":
            raise FormatError(f"{path}: expected binary PGM magic 'P5', got {magic!r}")
        try:
            width = int(_read_header_token(f))
            height = int(_read_header_token(f))
            maxval = int(_read_header_token(f))
        except ValueError as exc:
            raise FormatError(f"{path}: malformed PGM header: {exc}") from exc
        if width <= 0 or height <= 0:
            raise FormatError(f"{path}: non-positive PGM dimensions {width}x{height}")
        if maxval != 255:
            raise FormatError(f"{path}: mask PGM requires maxval 255, got {maxval}")
        data = f.read(width * height)
        if len(data) != width * height:
            raise FormatError(f"{path}: truncated PGM payload")
    raster = np.frombuffer(data, dtype=np.uint8).reshape(height, width)
    bad = (raster != 0) & (raster != 255)
    if bad.any():
        offenders = np.unique(raster[bad])[:8]
        raise FormatError(f"{path}: non-binary byte values {offenders.tolist()} (strict 0/255 contract)")
    return BinaryMask(raster == 255)


def save_mask(mask: BinaryMask, path) -> None:
    """Write a mask as canonical P5 PGM with bytes 0/255."""
    raster = np.where(mask.bits, 255, 0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P5\n")
        f.write(f"{mask.width} {mask.height}\n".encode("ascii"))
        f.write(b"255\n")
        f.write(raster.tobytes())
