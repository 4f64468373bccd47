"""Block side information and the quantized-Gaussian rate model.

Each ``(channel, 4x4 block)`` of a latent is summarised by its sample mean
(11-bit signed fixed point, step 0.25) and the index of the nearest entry of a
64-entry log-spaced scale table. The decoder expands these records back into a
per-element ``(mu, sigma)`` field, which both drives the range coder and feeds
the mask predictors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import InvalidInput
from .tensors import LatentTensor, round_half_away

SIGMA_MIN = 0.11
SIGMA_MAX = 256.0
NUM_SCALES = 64
BLOCK = 4
LIKELIHOOD_FLOOR = 2.0 ** -16
MU_STEP = 0.25
MU_BITS = 11
SIGMA_BITS = 6
RECORD_BITS = MU_BITS + SIGMA_BITS
_MU_Q_MIN = -(1 << (MU_BITS - 1))
_MU_Q_MAX = (1 << (MU_BITS - 1)) - 1

SCALE_TABLE = np.exp(np.linspace(np.log(SIGMA_MIN), np.log(SIGMA_MAX), NUM_SCALES))
SCALE_TABLE[0], SCALE_TABLE[-1] = SIGMA_MIN, SIGMA_MAX
SCALE_TABLE.setflags(write=False)


def nearest_scale_index(sigma) -> np.ndarray:
    """Index of the nearest table entry (absolute distance, ties to the lower index)."""
    s = np.clip(np.asarray(sigma, dtype=np.float64), SIGMA_MIN, SIGMA_MAX)
    hi = np.clip(np.searchsorted(SCALE_TABLE, s, side="left"), 1, NUM_SCALES - 1)
    lo = hi - 1
    pick_hi = (SCALE_TABLE[hi] - s) < (s - SCALE_TABLE[lo])
    return np.where(pick_hi, hi, lo).astype(np.int64)


@dataclass(frozen=True)
class SideInfo:
    """Per-(channel, block) records covering a latent of ``dims``."""

    dims: tuple
    mu_q: np.ndarray       # (C, BH, BW) int, units of MU_STEP
    sigma_idx: np.ndarray  # (C, BH, BW) int, < NUM_SCALES

    def __post_init__(self):
        C, H, W = self.dims
        shape = (C, -(-H // BLOCK), -(-W // BLOCK))
        mu_q = np.asarray(self.mu_q, dtype=np.int64)
        sig = np.asarray(self.sigma_idx, dtype=np.int64)
        if mu_q.shape != shape or sig.shape != shape:
            raise InvalidInput(f"side info grid {mu_q.shape} does not cover dims {self.dims}")
        if mu_q.size and (mu_q.min() < _MU_Q_MIN or mu_q.max() > _MU_Q_MAX):
            raise InvalidInput("mu_q outside 11-bit signed range")
        if sig.size and (sig.min() < 0 or sig.max() >= NUM_SCALES):
            raise InvalidInput("sigma_idx outside [0, 64)")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "mu_q", mu_q)
        object.__setattr__(self, "sigma_idx", sig)

    @property
    def num_records(self) -> int:
        return self.mu_q.size

    def to_bytes(self) -> bytes:
        """Pack records big-endian, 11 mu bits then 6 sigma bits, zero-padded at the end."""
        n = self.num_records
        if n == 0:
            return b""
        mu = (self.mu_q.reshape(-1) & ((1 << MU_BITS) - 1)).astype(np.uint32)
        rec = (mu << SIGMA_BITS) | self.sigma_idx.reshape(-1).astype(np.uint32)
        shifts = np.arange(RECORD_BITS - 1, -1, -1, dtype=np.uint32)
        bits = ((rec[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)
        return np.packbits(bits).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, dims) -> "SideInfo":
        C, H, W = dims
        shape = (C, -(-H // BLOCK), -(-W // BLOCK))
        n = int(np.prod(shape))
        need = -(-n * RECORD_BITS // 8)
        if len(data) != need:
            raise InvalidInput(f"side info is {len(data)} bytes, expected {need}")
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))[: n * RECORD_BITS]
        weights = (1 << np.arange(RECORD_BITS - 1, -1, -1)).astype(np.int64)
        rec = bits.reshape(n, RECORD_BITS).astype(np.int64) @ weights
        mu = rec >> SIGMA_BITS
        mu = np.where(mu >= (1 << (MU_BITS - 1)), mu - (1 << MU_BITS), mu)
        sig = rec & ((1 << SIGMA_BITS) - 1)
        return cls(tuple(dims), mu.reshape(shape), sig.reshape(shape))


def _block_view(x: np.ndarray, fill=np.nan):
    """Pad (C, H, W) to whole 4x4 blocks and return (C, BH, BW, 16)."""
    C, H, W = x.shape
    BH, BW = -(-H // BLOCK), -(-W // BLOCK)
    padded = np.full((C, BH * BLOCK, BW * BLOCK), fill, dtype=np.float64)
    padded[:, :H, :W] = x
    return padded.reshape(C, BH, BLOCK, BW, BLOCK).transpose(0, 1, 3, 2, 4).reshape(C, BH, BW, -1)


def extract_side_info(latent: LatentTensor) -> SideInfo:
    blocks = _block_view(latent.values.astype(np.float64))
    count = np.sum(~np.isnan(blocks), axis=-1)
    mean = np.nansum(blocks, axis=-1) / count
    var = np.nansum((blocks - mean[..., None]) ** 2, axis=-1) / count
    sigma = np.where(count == 1, SIGMA_MIN, np.sqrt(var))
    mu_q = np.clip(round_half_away(mean / MU_STEP), _MU_Q_MIN, _MU_Q_MAX).astype(np.int64)
    return SideInfo(latent.dims, mu_q, nearest_scale_index(sigma))


@dataclass(frozen=True)
class GaussianField:
    """Per-element ``mu`` (real) and scale-table index; ``sigma`` is derived."""

    mu: np.ndarray
    sigma_idx: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        idx = np.asarray(self.sigma_idx, dtype=np.int64)
        if mu.shape != idx.shape or mu.ndim != 3:
            raise InvalidInput("mu and sigma_idx must share a 3-D shape")
        if idx.size and (idx.min() < 0 or idx.max() >= NUM_SCALES):
            raise InvalidInput("sigma_idx outside [0, 64)")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma_idx", idx)

    @classmethod
    def from_sigma(cls, mu, sigma) -> "GaussianField":
        return cls(mu, nearest_scale_index(sigma))

    @property
    def sigma(self) -> np.ndarray:
        return SCALE_TABLE[self.sigma_idx]

    @property
    def dims(self):
        return self.mu.shape


def expand_side_info(side: SideInfo, dims) -> GaussianField:
    if tuple(dims) != side.dims:
        raise InvalidInput(f"side info dims {side.dims} != requested {tuple(dims)}")
    C, H, W = side.dims
    mu = np.repeat(np.repeat(side.mu_q * MU_STEP, BLOCK, axis=1), BLOCK, axis=2)[:, :H, :W]
    idx = np.repeat(np.repeat(side.sigma_idx, BLOCK, axis=1), BLOCK, axis=2)[:, :H, :W]
    return GaussianField(mu, idx)


def likelihood(v, mu, sigma):
    """Probability mass of integer ``v`` under N(mu, sigma^2) integrated over [v-.5, v+.5].

    Computed on the near side of the mean to avoid cancellation in the tails;
    floored at 2**-16.
    """
    v = np.asarray(v, dtype=np.float64)
    d = np.abs(v - np.asarray(mu, dtype=np.float64))
    s = np.asarray(sigma, dtype=np.float64)
    # mass of [d-.5, d+.5] equals that of [-d-.5, -d+.5] by symmetry
    p = ndtr((0.5 - d) / s) - ndtr((-0.5 - d) / s)
    p = np.maximum(p, LIKELIHOOD_FLOOR)
    return p if p.ndim else float(p)


def element_bits(latent: LatentTensor, field: GaussianField) -> np.ndarray:
    return -np.log2(likelihood(latent.values, field.mu, field.sigma))


def estimate_rate(latent: LatentTensor, field: GaussianField, mask=None) -> float:
    """Ideal code length in bits of the elements selected by ``mask`` (all if None)."""
    if tuple(field.dims) != latent.dims:
        raise InvalidInput("field and latent dims differ")
    bits = element_bits(latent, field)
    if mask is None:
        return float(bits.sum())
    m = np.asarray(getattr(mask, "bits", mask), dtype=bool)
    if m.shape != bits.shape:
        raise InvalidInput("mask and latent dims differ")
    return float(bits[m].sum())


def side_info_rate(side: SideInfo) -> int:
    return RECORD_BITS * side.num_records
