"""Translational block matching on 8x8 blocks.

A vector ``(dx, dy)`` says the block's content moved by ``(dx, dy)`` since the
reference, so the prediction of pixel ``(y, x)`` is
``ref[clamp(y - dy), clamp(x - dx)]``. Reads outside the frame are clamped to
the nearest edge sample; edge blocks may be partial.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .tensors import LatentTensor, PixelImage, round_half_away, to_gray

BLOCK = 8
RADIUS = 8


@dataclass(frozen=True)
class MotionField:
    dx: np.ndarray  # (BH, BW) int
    dy: np.ndarray

    def __post_init__(self):
        dx = np.asarray(self.dx, dtype=np.int64)
        dy = np.asarray(self.dy, dtype=np.int64)
        if dx.shape != dy.shape or dx.ndim != 2:
            raise InvalidInput("dx and dy must be 2-D grids of equal shape")
        if np.abs(dx).max(initial=0) > RADIUS or np.abs(dy).max(initial=0) > RADIUS:
            raise InvalidInput(f"motion vector outside search radius {RADIUS}")
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "dy", dy)

    @property
    def shape(self):
        return self.dx.shape

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape, np.int64), np.zeros(shape, np.int64))

    def to_latent(self) -> LatentTensor:
        return LatentTensor(np.stack([self.dx, self.dy]))

    @classmethod
    def from_latent(cls, values) -> "MotionField":
        """Round (half away from zero) and clamp a possibly mean-filled motion latent."""
        v = np.clip(round_half_away(np.asarray(values, dtype=np.float64)), -RADIUS, RADIUS)
        return cls(v[0].astype(np.int64), v[1].astype(np.int64))


def block_grid(height: int, width: int):
    return -(-height // BLOCK), -(-width // BLOCK)


def _plane(frame) -> np.ndarray:
    if isinstance(frame, PixelImage):
        return to_gray(frame.samples)
    return np.asarray(frame, dtype=np.float64)


def _shifted(ref: np.ndarray, dx: int, dy: int) -> np.ndarray:
    H, W = ref.shape[:2]
    rows = np.clip(np.arange(H) - dy, 0, H - 1)
    cols = np.clip(np.arange(W) - dx, 0, W - 1)
    return ref[rows][:, cols]


def _block_sums(a: np.ndarray) -> np.ndarray:
    H, W = a.shape
    rs = np.add.reduceat(a, np.arange(0, H, BLOCK), axis=0)
    return np.add.reduceat(rs, np.arange(0, W, BLOCK), axis=1)


def candidate_order(radius: int = RADIUS):
    """Search order encoding the tie-break: smallest |dx|+|dy|, then dy, then dx."""
    cands = [(dx, dy) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]
    return sorted(cands, key=lambda v: (abs(v[0]) + abs(v[1]), v[1], v[0]))


def motion_estimate(cur, ref, radius: int = RADIUS) -> MotionField:
    """Exhaustive SAD search on luma; the first candidate in tie-break order wins ties."""
    c, r = _plane(cur), _plane(ref)
    if c.shape != r.shape:
        raise InvalidInput(f"frame dims differ: {c.shape} vs {r.shape}")
    best = None
    dx_out = dy_out = None
    for dx, dy in candidate_order(radius):
        sad = _block_sums(np.abs(c - _shifted(r, dx, dy)))
        if best is None:
            best = sad
            dx_out = np.full(sad.shape, dx, np.int64)
            dy_out = np.full(sad.shape, dy, np.int64)
            continue
        better = sad < best
        best = np.where(better, sad, best)
        dx_out[better] = dx
        dy_out[better] = dy
    return MotionField(dx_out, dy_out)


def motion_compensate(ref, field: MotionField):
    """Block-wise copy from ``ref`` at the displaced location, edge-clamped.

    Accepts a ``PixelImage`` (returns one) or a ``(H, W[, C])`` array.
    """
    is_img = isinstance(ref, PixelImage)
    a = ref.samples if is_img else np.asarray(ref)
    H, W = a.shape[:2]
    if field.shape != block_grid(H, W):
        raise InvalidInput(f"motion grid {field.shape} does not match frame {H}x{W}")
    by = np.arange(H) // BLOCK
    bx = np.arange(W) // BLOCK
    dyp = field.dy[by][:, bx]
    dxp = field.dx[by][:, bx]
    rows = np.clip(np.arange(H)[:, None] - dyp, 0, H - 1)
    cols = np.clip(np.arange(W)[None, :] - dxp, 0, W - 1)
    out = a[rows, cols]
    return PixelImage(out) if is_img else out
