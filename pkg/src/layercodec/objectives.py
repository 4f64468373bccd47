"""Training objectives: image RD loss, cumulative video RD loss, adapter loss."""

from __future__ import annotations

import numpy as np

from .errors import InvalidInput


def rd_loss(rate_bits: float, pixels: int, distortion: float, lam: float) -> float:
    """``bpp + lam * D``."""
    if pixels <= 0:
        raise InvalidInput("pixel count must be positive")
    return rate_bits / pixels + lam * distortion


def cumulative_rd_loss(frames, T: int, lam: float, pixels: int) -> float:
    """Mean over the first ``T`` frames of ``bpp(motion) + bpp(residual) + lam * D``.

    ``frames`` holds ``(motion_bits, residual_bits, distortion)`` triples.
    """
    frames = list(frames)
    if T < 1 or len(frames) < T:
        raise InvalidInput(f"need {T} frame terms, got {len(frames)}")
    if pixels <= 0:
        raise InvalidInput("pixel count must be positive")
    total = 0.0
    for motion_bits, residual_bits, d in frames[:T]:
        total += motion_bits / pixels + residual_bits / pixels + lam * d
    return total / T


def mse(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInput(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def adapter_loss(prediction, target) -> float:
    return mse(prediction, target)
