"""Deterministic synthetic images and sequences for tests and experiments."""

from __future__ import annotations

import numpy as np

from .tensors import PixelImage


def _texture(rng, shape, amplitude):
    return rng.normal(0.0, amplitude, shape)


def structured_image(seed: int, size=(64, 64), channels: int = 1, noise: float = 12.0) -> PixelImage:
    """Smooth gradient, a few flat shapes, and mild noise."""
    rng = np.random.default_rng(seed)
    H, W = size
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    base = 128 + rng.uniform(-60, 60) * (xx / W - 0.5) + rng.uniform(-60, 60) * (yy / H - 0.5)
    img = np.repeat(base[:, :, None], channels, axis=2)
    for _ in range(rng.integers(2, 5)):
        cy, cx = rng.uniform(0, H), rng.uniform(0, W)
        r_max = max(H, W) / 3
        r = rng.uniform(min(6.0, r_max), r_max)
        level = rng.uniform(-70, 70, channels)
        if rng.random() < 0.5:
            sel = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        else:
            sel = (np.abs(yy - cy) < r) & (np.abs(xx - cx) < r * rng.uniform(0.5, 1.5))
        img[sel] += level
    img += _texture(rng, img.shape, noise)
    return PixelImage(np.clip(np.round(img), 0, 255).astype(np.uint8))


def image_corpus(count: int = 16, size=(64, 64), channels: int = 1, seed: int = 0, noise: float = 12.0):
    return [structured_image(seed * 1000 + k, size, channels, noise) for k in range(count)]


def noise_image(seed: int, size=(64, 64), channels: int = 1) -> PixelImage:
    rng = np.random.default_rng(seed)
    return PixelImage(rng.integers(0, 256, (*size, channels), dtype=np.uint8))


def translating_square(frames: int = 16, size=(128, 128), square: int = 20, velocity=(2, 1),
                       seed: int = 0, channels: int = 1, texture: float = 40.0) -> list[PixelImage]:
    """Textured square moving at ``velocity = (dx, dy)`` pixels/frame over a textured static background."""
    rng = np.random.default_rng(seed)
    H, W = size
    background = 110 + _texture(rng, (H, W, channels), texture)
    patch = 170 + _texture(rng, (square, square, channels), texture)
    dx, dy = velocity
    out = []
    y0, x0 = H // 4, W // 4
    for t in range(frames):
        f = background.copy()
        y = (y0 + dy * t) % (H - square)
        x = (x0 + dx * t) % (W - square)
        f[y:y + square, x:x + square] = patch
        out.append(PixelImage(np.clip(np.round(f), 0, 255).astype(np.uint8)))
    return out


def static_sequence(frames: int = 4, size=(64, 64), seed: int = 0, channels: int = 1) -> list[PixelImage]:
    img = structured_image(seed, size, channels, noise=30.0)
    return [img] * frames
