"""The ``EACB`` layered container.

Layout, all integers little-endian::

    magic        4s    b"EACB"
    version      u8    1
    mode         u8    0 image, 1 video-intra, 2 video-inter-motion,
                       3 video-inter-residual, 4 video-sequence
    C, H, W      u16 x 3
    n_layers     u8
    predictor    u8    0 sigma-topk, 1 conv-gumbel
    params_len   u16
    params       bytes (mode-specific, see the pipeline modules)
    n_sections   u16   == n_layers for modes 0-3, frame count for mode 4
    lengths      u32 x n_sections
    side_len     u32
    header_crc   u32   CRC-32 of every header byte above
    side         side_len bytes, then u32 CRC-32
    section 1    lengths[0] bytes, then u32 CRC-32
    ...

Sections follow in ascending order, so layers ``1..i`` (or frames
``1..i``) are always a byte prefix of the file.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

from .errors import CorruptionError, FormatError, RangeError, SerializationError

MAGIC = b"EACB"
VERSION = 1
MODE_IMAGE = 0
MODE_VIDEO_INTRA = 1
MODE_VIDEO_MOTION = 2
MODE_VIDEO_RESIDUAL = 3
MODE_VIDEO_SEQUENCE = 4

_FIXED = struct.Struct("<4sBBHHHBBH")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
CRC_BYTES = 4


def crc32(data: bytes) -> int:
    return zlib.crc32(data) & 0xFFFFFFFF


@dataclass
class ContainerHeader:
    mode: int
    dims: tuple            # (C, H, W)
    n_layers: int
    predictor: int = 0
    params: bytes = b""
    lengths: list = field(default_factory=list)
    side_len: int = 0
    version: int = VERSION

    def encode(self) -> bytes:
        C, H, W = self.dims
        try:
            body = (_FIXED.pack(MAGIC, self.version, self.mode, C, H, W, self.n_layers,
                                self.predictor, len(self.params))
                    + bytes(self.params)
                    + _U16.pack(len(self.lengths))
                    + b"".join(_U32.pack(n) for n in self.lengths)
                    + _U32.pack(self.side_len))
        except struct.error as exc:
            raise SerializationError(f"header field out of range: {exc}") from None
        return body + _U32.pack(crc32(body))

    @property
    def size(self) -> int:
        return _FIXED.size + len(self.params) + 2 + 4 * len(self.lengths) + 4 + CRC_BYTES

    def prefix_size(self, i: int) -> int:
        """Bytes needed to read the header, side info and sections ``1..i``."""
        return (self.size + self.side_len + CRC_BYTES
                + sum(n + CRC_BYTES for n in self.lengths[:i]))

    @property
    def total_size(self) -> int:
        return self.prefix_size(len(self.lengths))


def parse_header(data: bytes) -> ContainerHeader:
    data = memoryview(data)
    if len(data) < 4 or bytes(data[:4]) != MAGIC:
        raise FormatError("bad container magic")
    if len(data) < _FIXED.size:
        raise FormatError("container header truncated")
    magic, version, mode, C, H, W, n_layers, predictor, plen = _FIXED.unpack_from(data)
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    if mode > MODE_VIDEO_SEQUENCE:
        raise FormatError(f"unknown container mode {mode}")
    pos = _FIXED.size
    need = pos + plen + 2
    if len(data) < need:
        raise FormatError("container header truncated")
    params = bytes(data[pos:pos + plen])
    pos += plen
    (nsec,) = _U16.unpack_from(data, pos)
    pos += 2
    need = pos + 4 * nsec + 4 + CRC_BYTES
    if len(data) < need:
        raise FormatError("container header truncated")
    lengths = [_U32.unpack_from(data, pos + 4 * k)[0] for k in range(nsec)]
    pos += 4 * nsec
    (side_len,) = _U32.unpack_from(data, pos)
    pos += 4
    (crc,) = _U32.unpack_from(data, pos)
    if crc32(data[:pos]) != crc:
        raise CorruptionError("container header CRC mismatch")
    if mode != MODE_VIDEO_SEQUENCE and nsec != n_layers:
        raise FormatError(f"{nsec} sections for {n_layers} layers")
    return ContainerHeader(mode, (C, H, W), n_layers, predictor, params, lengths, side_len, version)


def write_container(header: ContainerHeader, side: bytes, sections) -> bytes:
    sections = [bytes(s) for s in sections]
    if header.lengths and [len(s) for s in sections] != list(header.lengths):
        raise SerializationError("header lengths disagree with section sizes")
    if header.mode != MODE_VIDEO_SEQUENCE and len(sections) != header.n_layers:
        raise SerializationError(f"{len(sections)} sections for {header.n_layers} layers")
    header.lengths = [len(s) for s in sections]
    header.side_len = len(side)
    out = [header.encode(), side, _U32.pack(crc32(side))]
    for s in sections:
        out.append(s)
        out.append(_U32.pack(crc32(s)))
    return b"".join(out)


def _checked(data, start: int, length: int, what: str) -> bytes:
    end = start + length
    if len(data) < end + CRC_BYTES:
        raise FormatError(f"container truncated inside {what}")
    chunk = bytes(data[start:end])
    (crc,) = _U32.unpack_from(data, end)
    if crc32(chunk) != crc:
        raise CorruptionError(f"CRC mismatch in {what}")
    return chunk


def read_container(data: bytes, layers_upto: int | None = None):
    """Return ``(header, side_bytes, sections[:layers_upto])``.

    Only bytes up to the end of section ``layers_upto`` are read, so a file
    truncated after that section decodes identically.
    """
    header = parse_header(data)
    n = len(header.lengths)
    if layers_upto is None:
        layers_upto = n
    if layers_upto < 0 or layers_upto > n:
        raise RangeError(f"requested {layers_upto} sections, container has {n}")
    pos = header.size
    side = _checked(data, pos, header.side_len, "side info")
    pos += header.side_len + CRC_BYTES
    sections = []
    for k in range(layers_upto):
        sections.append(_checked(data, pos, header.lengths[k], f"section {k + 1}"))
        pos += header.lengths[k] + CRC_BYTES
    return header, side, sections


def container_size(data: bytes, offset: int = 0) -> int:
    """Length of the container starting at ``offset`` (from its header alone)."""
    return parse_header(memoryview(data)[offset:]).total_size
