"""Static-model range coder over quantized-Gaussian CDF tables.

Coder state
-----------
``low`` is a 64-bit register holding a 48-bit window plus one carry bit;
``range`` lives in ``[2**40, 2**48)`` after every renormalisation. Symbols
are coded with 16-bit frequencies (``r = range >> 16``), so per-symbol
truncation loss is below ``2**-24`` of a bit.

Carry handling follows the cache/pending-0xFF scheme: the most recently
completed output byte is held in ``cache`` and a run of 0xFF bytes is
counted in ``pending`` until a later shift proves whether a carry reaches
them. The stream starts with a virtual cache byte of 0, which is dropped
on output (a carry can never reach it because the coded value is < 1).

Flush
-----
The final value is ``low`` rounded up to a multiple of ``2**32``; only its
top two window bytes are written, so flush is exactly 2 bytes and a payload
for ``N`` renormalisation shifts is ``N + 2`` bytes long. The decoder reads
6 bytes up front and one per shift, treating the 4 positions past the end as
zero, and checks that it consumed exactly ``len(payload) + 4`` positions.

Alphabet
--------
Tables cover centered residuals ``r`` in ``[-127, 127]`` (indices 0..254)
plus an escape bucket (index 255). An escaped residual is followed by its
9-bit two's complement value coded with a flat 512-way split, so ``r`` in
``[-256, 255]`` is always representable.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .entropy import LIKELIHOOD_FLOOR, NUM_SCALES, SCALE_TABLE, likelihood
from .errors import DecodingError, EncodingError, InvalidInput

PRECISION = 16
TOTAL = 1 << PRECISION
ALPHABET_MIN = -127
ALPHABET_MAX = 127
ESCAPE = ALPHABET_MAX - ALPHABET_MIN + 1  # index 255
NUM_SYMBOLS = ESCAPE + 1
RAW_BITS = 9
RAW_MIN = -(1 << (RAW_BITS - 1))
RAW_MAX = (1 << (RAW_BITS - 1)) - 1
NUM_PHASES = 4  # mu offsets 0, .25, .5, .75

_WINDOW = 48
_TOP = 1 << _WINDOW
_MASK = _TOP - 1
_BOT = 1 << (_WINDOW - 8)
_SHIFT = _WINDOW - 8
_FLUSH_BYTES = 2
_TAIL_READ = _WINDOW // 8 - _FLUSH_BYTES


@dataclass(frozen=True)
class CdfTable:
    sigma_idx: int
    phase: int
    freqs: tuple
    cum: tuple  # len NUM_SYMBOLS + 1, cum[0] = 0, cum[-1] = TOTAL

    def entropy_bits(self) -> float:
        f = np.array(self.freqs, dtype=np.float64) / TOTAL
        return float(-(f * np.log2(f)).sum())


def _apportion(p: np.ndarray) -> np.ndarray:
    """Largest-remainder apportionment of TOTAL proportional to ``p``, each share >= 1."""
    quota = p / p.sum() * TOTAL
    base = np.floor(quota).astype(np.int64)
    rem = quota - base
    extra = TOTAL - int(base.sum())
    # zero shares are served first, then larger remainders, lower index on ties
    order = np.lexsort((np.arange(len(p)), -rem, base != 0))
    base[order[:extra]] += 1
    while base.min() < 1:
        base[int(np.argmax(base))] -= 1
        base[int(np.argmin(base))] += 1
    return base


@lru_cache(maxsize=NUM_SCALES * NUM_PHASES)
def build_cdf(sigma_idx: int, phase: int = 0) -> CdfTable:
    """CDF table for residuals about a mean offset of ``phase / 4``."""
    if not 0 <= sigma_idx < NUM_SCALES:
        raise InvalidInput(f"sigma_idx {sigma_idx} outside [0, {NUM_SCALES})")
    if not 0 <= phase < NUM_PHASES:
        raise InvalidInput(f"phase {phase} outside [0, {NUM_PHASES})")
    sigma = SCALE_TABLE[sigma_idx]
    mu = phase / NUM_PHASES
    v = np.arange(ALPHABET_MIN, ALPHABET_MAX + 1)
    p = likelihood(v, mu, sigma)
    tail = ndtr((ALPHABET_MIN - 0.5 - mu) / sigma) + ndtr(-(ALPHABET_MAX + 0.5 - mu) / sigma)
    p = np.append(p, max(float(tail), LIKELIHOOD_FLOOR))
    freqs = _apportion(p)
    cum = np.concatenate([[0], np.cumsum(freqs)])
    return CdfTable(sigma_idx, phase, tuple(int(f) for f in freqs), tuple(int(c) for c in cum))


def table_for(mu: float, sigma_idx: int) -> tuple[int, CdfTable]:
    """Return ``(center, table)`` for an element with mean ``mu``.

    ``mu`` is snapped to the quarter grid; the residual to code is
    ``v - center`` with ``center = floor(mu)``.
    """
    mq = int(np.floor(mu * NUM_PHASES + 0.5))
    center, phase = divmod(mq, NUM_PHASES)
    return center, build_cdf(int(sigma_idx), phase)


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK
        self.cache = 0
        self.pending = 0
        self.out = bytearray()
        self._done = False

    def _shift_low(self):
        low = self.low
        if low < (0xFF << _SHIFT) or low >= _TOP:
            carry = low >> _WINDOW
            self.out.append((self.cache + carry) & 0xFF)
            if self.pending:
                self.out.extend(bytes([(0xFF + carry) & 0xFF]) * self.pending)
                self.pending = 0
            self.cache = (low >> _SHIFT) & 0xFF
        else:
            self.pending += 1
        self.low = (low << 8) & _MASK

    def _code(self, start: int, size: int, bits: int):
        r = self.range >> bits
        self.low += r * start
        self.range = r * size
        while self.range < _BOT:
            self.range <<= 8
            self._shift_low()

    def encode_symbol(self, residual: int, table: CdfTable):
        if ALPHABET_MIN <= residual <= ALPHABET_MAX:
            s = residual - ALPHABET_MIN
            self._code(table.cum[s], table.freqs[s], PRECISION)
        elif RAW_MIN <= residual <= RAW_MAX:
            self._code(table.cum[ESCAPE], table.freqs[ESCAPE], PRECISION)
            self._code(residual & ((1 << RAW_BITS) - 1), 1, RAW_BITS)
        else:
            raise EncodingError(f"residual {residual} outside [{RAW_MIN}, {RAW_MAX}]")

    def finish(self) -> bytes:
        if self._done:
            return bytes(self.out[1:])
        step = 1 << (_WINDOW - 8 * _FLUSH_BYTES)
        self.low = -(-self.low // step) * step
        for _ in range(_FLUSH_BYTES):
            self._shift_low()
        self.out.append(self.cache)
        self.out.extend(b"\xff" * self.pending)
        self.pending = 0
        self._done = True
        assert self.out[0] == 0
        return bytes(self.out[1:])


class RangeDecoder:
    def __init__(self, payload: bytes):
        self.data = bytes(payload)
        self.pos = 0
        self.range = _MASK
        self.code = 0
        for _ in range(_WINDOW // 8):
            self.code = (self.code << 8) | self._next_byte()

    def _next_byte(self) -> int:
        pos = self.pos
        self.pos += 1
        if pos < len(self.data):
            return self.data[pos]
        if pos < len(self.data) + _TAIL_READ:
            return 0
        raise DecodingError("payload truncated")

    def _normalize(self):
        while self.range < _BOT:
            self.code = ((self.code << 8) | self._next_byte())
            self.range <<= 8

    def decode_symbol(self, table: CdfTable) -> int:
        r = self.range >> PRECISION
        value = self.code // r
        if value >= TOTAL:
            raise DecodingError("code value outside table range")
        s = bisect_right(table.cum, value) - 1
        self.code -= r * table.cum[s]
        self.range = r * table.freqs[s]
        self._normalize()
        if s != ESCAPE:
            return s + ALPHABET_MIN
        r = self.range >> RAW_BITS
        raw = self.code // r
        if raw >= (1 << RAW_BITS):
            raise DecodingError("raw escape value out of range")
        self.code -= r * raw
        self.range = r
        self._normalize()
        return raw - (1 << RAW_BITS) if raw > RAW_MAX else raw

    def finish(self):
        if self.pos != len(self.data) + _TAIL_READ:
            raise DecodingError(
                f"payload length mismatch: consumed {self.pos - _TAIL_READ} of {len(self.data)} bytes")


def encode(symbols, tables) -> bytes:
    """Range-code centered residuals, one table per symbol."""
    symbols = list(symbols)
    tables = list(tables)
    if len(symbols) != len(tables):
        raise EncodingError("need exactly one table per symbol")
    enc = RangeEncoder()
    for s, t in zip(symbols, tables):
        enc.encode_symbol(int(s), t)
    return enc.finish()


def decode(payload: bytes, count: int, tables) -> list[int]:
    tables = list(tables)
    if len(tables) != count:
        raise DecodingError("need exactly one table per symbol")
    dec = RangeDecoder(payload)
    out = [dec.decode_symbol(t) for t in tables]
    dec.finish()
    return out


def element_tables(mu, sigma_idx):
    """Per-element centers and tables for flat arrays of ``mu`` / ``sigma_idx``."""
    mq = np.floor(np.asarray(mu, dtype=np.float64) * NUM_PHASES + 0.5).astype(np.int64)
    centers = np.floor_divide(mq, NUM_PHASES)
    phases = mq - centers * NUM_PHASES
    idx = np.asarray(sigma_idx, dtype=np.int64)
    tables = [build_cdf(int(s), int(p)) for s, p in zip(idx.tolist(), phases.tolist())]
    return centers, tables


def encode_values(values, mu, sigma_idx) -> bytes:
    """Encode latent values given per-element ``mu`` and ``sigma_idx`` (flat, same order)."""
    centers, tables = element_tables(mu, sigma_idx)
    residuals = np.asarray(values, dtype=np.int64) - centers
    return encode(residuals.tolist(), tables)


def decode_values(payload: bytes, mu, sigma_idx) -> np.ndarray:
    centers, tables = element_tables(mu, sigma_idx)
    residuals = decode(payload, len(tables), tables)
    return np.asarray(residuals, dtype=np.int64) + centers
