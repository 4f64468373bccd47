"""The ``EACW`` weights envelope shared by mask predictors and adapters.

Layout (all little-endian)::

    magic   4s   b"EACW"
    version u8   1
    mode    u8   0 image predictor, 1 video predictor,
                 2 image adapter,   3 video adapter
    C       u16  latent channels (predictors) / image channels (adapters)
    F       u8   temporal feature channels (predictors) / hidden width (adapters)
    values  f32 until end of file, tensors concatenated in the order
            documented by the owning module
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import FormatError, InvalidWeights

MAGIC = b"EACW"
VERSION = 1
MODE_IMAGE_PREDICTOR = 0
MODE_VIDEO_PREDICTOR = 1
MODE_IMAGE_ADAPTER = 2
MODE_VIDEO_ADAPTER = 3

_HEAD = struct.Struct("<4sBBHB")


def pack(mode: int, c: int, f: int, tensors) -> bytes:
    flat = [np.asarray(t, dtype=np.float64).reshape(-1) for t in tensors]
    values = np.concatenate(flat) if flat else np.zeros(0)
    if not np.all(np.isfinite(values)):
        raise InvalidWeights("weights contain non-finite values")
    return _HEAD.pack(MAGIC, VERSION, mode, c, f) + values.astype("<f4").tobytes()


def unpack(data: bytes):
    """Return ``(mode, C, F, values)`` with values as float64."""
    if len(data) < _HEAD.size:
        raise FormatError("weights file truncated")
    magic, version, mode, c, f = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad weights magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported weights version {version}")
    body = data[_HEAD.size:]
    if len(body) % 4:
        raise FormatError("weights payload is not a whole number of float32 values")
    values = np.frombuffer(body, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise InvalidWeights("weights contain non-finite values")
    return mode, c, f, values


def split(values: np.ndarray, shapes):
    """Cut a flat vector into tensors of ``shapes``; the sizes must add up exactly."""
    out, pos = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        if pos + size > values.size:
            raise InvalidWeights("too few weight values for declared shapes")
        out.append(values[pos:pos + size].reshape(shape))
        pos += size
    if pos != values.size:
        raise InvalidWeights("too many weight values for declared shapes")
    return out


def checksum(data: bytes) -> int:
    return zlib.crc32(data) & 0xFFFFFFFF
