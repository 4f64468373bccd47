"""Core value types: quantized latents, layer masks, and 8-bit images.

Latents are stored as ``(channels, height, width)`` integer arrays and are
always flattened channel-major (channel, then row, then column). Encoder and
decoder rely on that order being identical.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInput, InvalidMaskSet

LATENT_MIN = -127
LATENT_MAX = 127


def round_half_away(x):
    """Round to nearest integer, ties away from zero (2.5 -> 3, -2.5 -> -3)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LatentTensor:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3:
            raise InvalidInput(f"latent must be 3-D (C, H, W), got shape {v.shape}")
        if min(v.shape) < 1:
            raise InvalidInput("latent dims must be positive")
        if v.size and (v.min() < LATENT_MIN or v.max() > LATENT_MAX):
            raise InvalidInput("latent values outside [-127, 127]")
        if v.size and not np.issubdtype(v.dtype, np.integer):
            if not np.array_equal(v, np.round(v)):
                raise InvalidInput("latent values must be integers")
        object.__setattr__(self, "values", _frozen(v.astype(np.int32)))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.values.shape)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def __len__(self):
        return self.values.size


def quantize(real_latent) -> LatentTensor:
    """Round-half-away-from-zero and clamp to the signed 8-bit symbol range."""
    y = np.asarray(real_latent, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise InvalidInput("non-finite value in latent")
    if y.ndim == 1:
        y = y.reshape(1, 1, -1)
    q = np.clip(round_half_away(y), LATENT_MIN, LATENT_MAX)
    return LatentTensor(q.astype(np.int32))


def flatten_index(c: int, h: int, w: int, dims) -> int:
    C, H, W = dims
    if not (0 <= c < C and 0 <= h < H and 0 <= w < W):
        raise IndexError(f"index {(c, h, w)} outside dims {tuple(dims)}")
    return c * H * W + h * W + w


def unflatten_index(k: int, dims) -> tuple[int, int, int]:
    C, H, W = dims
    if not 0 <= k < C * H * W:
        raise IndexError(f"flat index {k} outside [0, {C * H * W})")
    c, rem = divmod(k, H * W)
    h, w = divmod(rem, W)
    return c, h, w


@dataclass(frozen=True)
class LayerMask:
    bits: np.ndarray
    layer_index: int

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 3:
            raise InvalidInput("mask must be 3-D")
        if b.dtype != np.bool_:
            if not np.all((b == 0) | (b == 1)):
                raise InvalidInput("mask bits must be 0 or 1")
        if self.layer_index < 1:
            raise InvalidInput("layer_index is 1-based")
        object.__setattr__(self, "bits", _frozen(b.astype(bool)))

    @property
    def dims(self):
        return tuple(self.bits.shape)

    def popcount(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class MaskSet:
    """Ordered, pairwise-disjoint, covering set of layer masks.

    ``stack`` has shape ``(n, C, H, W)``.
    """

    stack: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.stack).astype(bool)
        if s.ndim != 4 or s.shape[0] < 1:
            raise InvalidMaskSet(f"mask stack must be (n, C, H, W), got {s.shape}")
        counts = s.sum(axis=0)
        if np.any(counts > 1):
            raise InvalidMaskSet("masks are not pairwise disjoint")
        if np.any(counts == 0):
            raise InvalidMaskSet("masks do not cover the latent")
        object.__setattr__(self, "stack", _frozen(s))

    @classmethod
    def from_masks(cls, masks) -> "MaskSet":
        return cls(np.stack([np.asarray(getattr(m, "bits", m)) for m in masks]))

    @classmethod
    def from_assignment(cls, layer_of, n: int) -> "MaskSet":
        """Build from a grid of 0-based layer indices."""
        layer_of = np.asarray(layer_of)
        return cls(np.stack([layer_of == i for i in range(n)]))

    @property
    def n(self) -> int:
        return self.stack.shape[0]

    @property
    def dims(self):
        return tuple(self.stack.shape[1:])

    @property
    def masks(self) -> list[LayerMask]:
        return [LayerMask(self.stack[i], i + 1) for i in range(self.n)]

    def __getitem__(self, i) -> LayerMask:
        """0-based access, returning the mask of layer ``i + 1``."""
        return LayerMask(self.stack[i], i + 1)

    def prefix(self, i: int) -> np.ndarray:
        """Union of masks 1..i as a boolean grid."""
        if i <= 0:
            return np.zeros(self.dims, dtype=bool)
        return self.stack[:i].any(axis=0)


@dataclass(frozen=True)
class PixelImage:
    """8-bit image stored as ``(height, width, channels)`` with 1 or 3 channels."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim == 2:
            s = s[:, :, None]
        if s.ndim != 3 or s.shape[2] not in (1, 3):
            raise InvalidInput(f"image must be HxW, HxWx1 or HxWx3, got {s.shape}")
        if s.shape[0] < 1 or s.shape[1] < 1:
            raise InvalidInput("empty image")
        if s.size and (s.min() < 0 or s.max() > 255):
            raise InvalidInput("samples outside [0, 255]")
        object.__setattr__(self, "samples", _frozen(s.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def channels(self) -> int:
        return self.samples.shape[2]

    @property
    def pixels(self) -> int:
        return self.height * self.width

    def as_float(self) -> np.ndarray:
        return self.samples.astype(np.float64)

    def __eq__(self, other):
        if not isinstance(other, PixelImage):
            return NotImplemented
        return np.array_equal(self.samples, other.samples)

    def __hash__(self):
        return hash(self.samples.tobytes())


# --- Netpbm (P5 / P6, maxval 255) -------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n\r]*[\n\r]\s*)*")


def _read_tokens(data: bytes, count: int):
    pos = 0
    tokens = []
    while len(tokens) < count:
        m = _TOKEN.match(data, pos)
        pos = m.end()
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise InvalidInput("truncated Netpbm header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise InvalidInput("malformed Netpbm header")
    return tokens, pos + 1


def decode_netpbm(data: bytes) -> PixelImage:
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise InvalidInput(f"unsupported Netpbm magic {magic!r}")
    (w, h, maxval), offset = _read_tokens(data[2:], 3)
    offset += 2
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise InvalidInput("only maxval 255 is supported")
    ch = 1 if magic == b"P5" else 3
    n = w * h * ch
    raster = data[offset:offset + n]
    if len(raster) != n:
        raise InvalidInput("truncated Netpbm raster")
    return PixelImage(np.frombuffer(raster, dtype=np.uint8).reshape(h, w, ch))


def encode_netpbm(img: PixelImage) -> bytes:
    magic = b"P5" if img.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (img.width, img.height)
    return header + img.samples.tobytes()


def read_image(path) -> PixelImage:
    return decode_netpbm(Path(path).read_bytes())


def write_image(path, img: PixelImage) -> None:
    Path(path).write_bytes(encode_netpbm(img))


def to_gray(samples) -> np.ndarray:
    """Luma (BT.601 weights) as float64 ``(H, W)``; gray input passes through."""
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim == 2:
        return s
    if s.shape[2] == 1:
        return s[:, :, 0]
    return s @ np.array([0.299, 0.587, 0.114])
