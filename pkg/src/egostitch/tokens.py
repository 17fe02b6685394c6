"""Pixel-to-token mask transfer and attention gating utilities.

A pixel mask is carried through the tokenizer's geometric preprocessing
(resize/crop/pad, nearest-neighbor), max-pooled onto the patch grid, and
turned into an additive attention bias whose masked keys receive -inf.
The masked softmax then yields exactly-zero weights for masked keys.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ConsistencyError, DegenerateRowError, ValidationError
from .geometry import BinaryMask


def _nn_index_map(dst: int, src: int) -> np.ndarray:
    """Nearest-neighbor gather indices for a 1-D resize (center-aligned)."""
    idx = np.floor((np.arange(dst) + 0.5) * (src / dst)).astype(np.int64)
    return np.clip(idx, 0, src - 1)


@dataclass(frozen=True)
class GeomTransform:
    """Ordered resize -> crop -> pad mapping from a source raster to the
    tokenizer input. Nearest-neighbor throughout; padding is always static."""

    src_size: tuple[int, int]  # (H, W)
    resize_to: tuple[int, int] | None = None
    crop: tuple[int, int, int, int] | None = None  # top, left, height, width
    pad: tuple[int, int, int, int] | None = None  # top, bottom, left, right

    def __post_init__(self):
        h, w = self._after_resize()
        if self.crop is not None:
            top, left, ch, cw = self.crop
            if top < 0 or left < 0 or ch < 1 or cw < 1 or top + ch > h or left + cw > w:
                raise ValidationError(f"crop {self.crop} outside raster {h}x{w}")
        if self.pad is not None and min(self.pad) < 0:
            raise ValidationError(f"pad amounts must be >= 0, got {self.pad}")

    def _after_resize(self) -> tuple[int, int]:
        return self.resize_to if self.resize_to is not None else self.src_size

    def _after_crop(self) -> tuple[int, int]:
        if self.crop is not None:
            return self.crop[2], self.crop[3]
        return self._after_resize()

    @property
    def out_size(self) -> tuple[int, int]:
        h, w = self._after_crop()
        if self.pad is not None:
            top, bottom, left, right = self.pad
            return h + top + bottom, w + left + right
        return h, w

    @classmethod
    def identity(cls, src_size: tuple[int, int]) -> "GeomTransform":
        return cls(src_size)

    @classmethod
    def letterbox(cls, src_size: tuple[int, int], target_size: tuple[int, int]) -> "GeomTransform":
        """Aspect-preserving resize plus centered zero padding to the target."""
        sh, sw = src_size
        th, tw = target_size
        scale = min(th / sh, tw / sw)
        rh = max(1, min(th, round(sh * scale)))
        rw = max(1, min(tw, round(sw * scale)))
        top = (th - rh) // 2
        left = (tw - rw) // 2
        return cls(src_size, resize_to=(rh, rw), pad=(top, th - rh - top, left, tw - rw - left))

    def apply(self, bits: np.ndarray) -> np.ndarray:
        if bits.shape != self.src_size:
            raise ConsistencyError(f"raster {bits.shape} does not match transform source {self.src_size}")
        out = bits
        if self.resize_to is not None:
            rows = _nn_index_map(self.resize_to[0], self.src_size[0])
            cols = _nn_index_map(self.resize_to[1], self.src_size[1])
            out = out[rows][:, cols]
        if self.crop is not None:
            top, left, ch, cw = self.crop
            out = out[top:top + ch, left:left + cw]
        if self.pad is not None:
            top, bottom, left, right = self.pad
            out = np.pad(out, ((top, bottom), (left, right)), constant_values=False)
        return out

    def source_pixel(self, y: int, x: int) -> tuple[int, int] | None:
        """Source pixel an output pixel samples from; None for padding."""
        if self.pad is not None:
            top, _, left, _ = self.pad
            ch, cw = self._after_crop()
            y, x = y - top, x - left
            if not (0 <= y < ch and 0 <= x < cw):
                return None
        if self.crop is not None:
            y, x = y + self.crop[0], x + self.crop[1]
        if self.resize_to is not None:
            y = int(_nn_index_map(self.resize_to[0], self.src_size[0])[y])
            x = int(_nn_index_map(self.resize_to[1], self.src_size[1])[x])
        return y, x


def transfer_mask(mask: BinaryMask, transform: GeomTransform) -> BinaryMask:
    """Carry a pixel mask through the tokenizer's geometric preprocessing."""
    return BinaryMask(transform.apply(mask.bits))


@dataclass(frozen=True)
class TokenMask:
    """Patch-grid indicator: token (u, v) is dynamic iff any covered pixel is."""

    grid: np.ndarray  # (grid_h, grid_w) bool
    patch_size: int
    input_size: tuple[int, int]  # (H', W') the grid was pooled from

    def __post_init__(self):
        h, w = self.input_size
        expected = (math.ceil(h / self.patch_size), math.ceil(w / self.patch_size))
        if self.grid.shape != expected:
            raise ConsistencyError(
                f"grid {self.grid.shape} inconsistent with input {self.input_size}, "
                f"patch {self.patch_size}: expected {expected}"
            )

    @property
    def token_count(self) -> int:
        return self.grid.size

    def sidecar(self) -> dict:
        return {
            "input_height": self.input_size[0],
            "input_width": self.input_size[1],
            "patch_size": self.patch_size,
            "grid_height": self.grid.shape[0],
            "grid_width": self.grid.shape[1],
        }


def pool_to_tokens(mask: BinaryMask, patch_size: int) -> TokenMask:
    """Max-pool a pixel mask onto the patch grid; border cells pool over
    their clipped extent, so a partially covered cell can still be masked."""
    if patch_size < 1:
        raise ValidationError(f"patch size must be >= 1, got {patch_size}")
    bits = mask.bits
    h, w = bits.shape
    gh, gw = math.ceil(h / patch_size), math.ceil(w / patch_size)
    padded = np.zeros((gh * patch_size, gw * patch_size), dtype=bool)
    padded[:h, :w] = bits
    grid = padded.reshape(gh, patch_size, gw, patch_size).any(axis=(1, 3))
    return TokenMask(grid, patch_size, (h, w))


def attention_bias(token_mask: TokenMask) -> np.ndarray:
    """Additive per-key bias in row-major token order: 0 static, -inf dynamic."""
    return np.where(token_mask.grid.reshape(-1), -np.inf, 0.0)


def masked_softmax(logits, bias) -> np.ndarray:
    """Softmax over keys with additive masking bias.

    Masked keys (bias -inf) come out with weight exactly 0.0; the surviving
    weights are normalized with max-subtraction over the unmasked entries,
    so no two infinities are ever added and no NaN can appear.
    """
    logits = np.asarray(logits, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if logits.shape != bias.shape or logits.ndim != 1:
        raise ValidationError(f"logits {logits.shape} and bias {bias.shape} must be equal-length vectors")
    if not np.all(np.isfinite(logits)):
        raise ValidationError("logits must be finite")
    unmasked = bias == 0.0
    if not np.isneginf(bias[~unmasked]).all():
        raise ValidationError("bias entries must be exactly 0 or -inf")
    if not unmasked.any():
        raise DegenerateRowError("every key is masked; attention row undefined")
    shifted = (logits + bias) - logits[unmasked].max()
    weights = np.exp(shifted)
    return weights / weights.sum()


class TokenGate(TransformerMixin, BaseEstimator):
    """Transformer from pixel suppression masks to token-grid masks.

    Each input mask is letterboxed to `input_size` (nearest-neighbor, static
    padding) and max-pooled with `patch_size`. Stateless; `fit` only
    validates parameters and records the output grid shape.
    """

    def __init__(self, input_size: tuple[int, int] = (800, 800), patch_size: int = 14):
        self.input_size = input_size
        self.patch_size = patch_size

    def fit(self, X=None, y=None) -> "TokenGate":
        if self.patch_size < 1:
            raise ValidationError(f"patch size must be >= 1, got {self.patch_size}")
        h, w = self.input_size
        if h < 1 or w < 1:
            raise ValidationError(f"input size must be positive, got {self.input_size}")
        self.grid_shape_ = (math.ceil(h / self.patch_size), math.ceil(w / self.patch_size))
        return self

    def gate(self, mask: BinaryMask) -> TokenMask:
        """Token mask for a single pixel mask."""
        transform = GeomTransform.letterbox((mask.height, mask.width), tuple(self.input_size))
        return pool_to_tokens(transfer_mask(mask, transform), self.patch_size)

    def transform(self, X) -> np.ndarray:
        """Stack of token grids, shape (n_masks, grid_h, grid_w)."""
        if not hasattr(self, "grid_shape_"):
            self.fit()
        masks = [m if isinstance(m, BinaryMask) else BinaryMask(np.asarray(m)) for m in X]
        return np.stack([self.gate(m).grid for m in masks]) if masks else \
            np.zeros((0,) + self.grid_shape_, dtype=bool)
