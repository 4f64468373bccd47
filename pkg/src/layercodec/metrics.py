"""PSNR and bits-per-pixel."""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidInput
from .tensors import PixelImage

PSNR_CAP = 100.0


def psnr(a, b) -> float:
    """``10 log10(255^2 / MSE)`` over all samples, capped at 100 dB."""
    x = a.samples if isinstance(a, PixelImage) else np.asarray(a)
    y = b.samples if isinstance(b, PixelImage) else np.asarray(b)
    if x.shape != y.shape:
        raise InvalidInput(f"image dims differ: {x.shape} vs {y.shape}")
    err = float(np.mean((x.astype(np.float64) - y.astype(np.float64)) ** 2))
    if err == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(255.0 ** 2 / err))


def bpp(num_bytes: int, pixels: int) -> float:
    if pixels <= 0:
        raise InvalidInput("pixel count must be positive")
    return 8.0 * num_bytes / pixels
