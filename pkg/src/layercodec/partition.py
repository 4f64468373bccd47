"""Mask prediction, latent partitioning, reconstruction and mean-fill aggregation.

Layer ``i`` of ``n`` is chosen from whatever layers ``1..i-1`` left over, and
layer ``n`` takes the remainder, so every predictor produces a partition by
construction. Ties always resolve toward determinism: equal sigma prefers the
lower flat index, equal logits prefer class 0 (drop).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import weightsfile
from .entropy import GaussianField
from .errors import InvalidInput, InvalidMaskSet, InvalidWeights
from .nn import conv2d, f32, leaky_relu
from .tensors import LatentTensor, MaskSet

SIGMA_TOPK = "sigma-topk"
CONV_GUMBEL = "conv-gumbel"
PREDICTOR_KINDS = {SIGMA_TOPK: 0, CONV_GUMBEL: 1}
HIDDEN = 8
LEAKY_SLOPE = 0.01
TEMPORAL_CHANNELS = 4


@dataclass
class ConvPredictorWeights:
    """One 3-conv stack per predicted layer (layers 1..n-1).

    Each stack is ``(w1, b1, w2, b2, w3, b3)`` with shapes
    ``(8, 2C+F, 3, 3)``, ``(8,)``, ``(8, 8, 3, 3)``, ``(8,)``,
    ``(2C, 8, 3, 3)``, ``(2C,)``; output channel ``2c`` is the drop logit and
    ``2c + 1`` the keep logit of latent channel ``c``. Stacks are stored in
    layer order, tensors in the order listed.
    """

    channels: int
    temporal_channels: int
    stacks: list

    def __post_init__(self):
        shapes = self.shapes(self.channels, self.temporal_channels)
        clean = []
        for stack in self.stacks:
            if len(stack) != len(shapes):
                raise InvalidWeights("each predictor stack needs 6 tensors")
            ts = []
            for t, shape in zip(stack, shapes):
                t = f32(t)
                if t.shape != shape:
                    raise InvalidWeights(f"weight shape {t.shape} != expected {shape}")
                if not np.all(np.isfinite(t)):
                    raise InvalidWeights("non-finite predictor weight")
                ts.append(t)
            clean.append(tuple(ts))
        self.stacks = clean

    @staticmethod
    def shapes(c: int, f: int):
        cin = 2 * c + f
        return [(HIDDEN, cin, 3, 3), (HIDDEN,), (HIDDEN, HIDDEN, 3, 3), (HIDDEN,),
                (2 * c, HIDDEN, 3, 3), (2 * c,)]

    @property
    def video(self) -> bool:
        return self.temporal_channels > 0

    @classmethod
    def zeros(cls, channels, temporal_channels=0, layers=1):
        shapes = cls.shapes(channels, temporal_channels)
        return cls(channels, temporal_channels, [[np.zeros(s) for s in shapes] for _ in range(layers)])

    @classmethod
    def random(cls, channels, temporal_channels=0, layers=1, seed=0, scale=0.5):
        rng = np.random.default_rng(seed)
        shapes = cls.shapes(channels, temporal_channels)
        return cls(channels, temporal_channels,
                   [[rng.normal(0.0, scale, s) for s in shapes] for _ in range(layers)])

    def to_bytes(self) -> bytes:
        mode = weightsfile.MODE_VIDEO_PREDICTOR if self.video else weightsfile.MODE_IMAGE_PREDICTOR
        return weightsfile.pack(mode, self.channels, self.temporal_channels,
                                [t for stack in self.stacks for t in stack])

    @classmethod
    def from_bytes(cls, data: bytes) -> "ConvPredictorWeights":
        mode, c, f, values = weightsfile.unpack(data)
        if mode not in (weightsfile.MODE_IMAGE_PREDICTOR, weightsfile.MODE_VIDEO_PREDICTOR):
            raise InvalidWeights(f"weights mode {mode} is not a predictor")
        if (mode == weightsfile.MODE_VIDEO_PREDICTOR) != (f > 0):
            raise InvalidWeights("predictor mode and temporal channel count disagree")
        shapes = cls.shapes(c, f)
        per = sum(int(np.prod(s)) for s in shapes)
        if values.size == 0 or values.size % per:
            raise InvalidWeights("value count is not a whole number of predictor stacks")
        stacks = [weightsfile.split(chunk, shapes) for chunk in np.split(values, values.size // per)]
        return cls(c, f, stacks)

    def checksum(self) -> int:
        return weightsfile.checksum(self.to_bytes())

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path):
        return cls.from_bytes(Path(path).read_bytes())


@dataclass
class PredictorConfig:
    kind: str = SIGMA_TOPK
    keep: tuple = (0.25,)
    weights: ConvPredictorWeights | None = None
    temperature: float = 1.0
    inference_mode: str = "argmax"

    def __post_init__(self):
        if self.kind not in PREDICTOR_KINDS:
            raise InvalidInput(f"unknown predictor kind {self.kind!r}")
        self.keep = tuple(float(k) for k in self.keep)
        if any(not 0.0 < k <= 1.0 for k in self.keep):
            raise InvalidInput("keep fractions must lie in (0, 1]")
        if sum(self.keep) > 1.0 + 1e-9:
            raise InvalidInput("keep fractions sum to more than 1")
        if self.temperature <= 0:
            raise InvalidInput("gumbel temperature must be positive")
        if self.inference_mode not in ("argmax", "sample"):
            raise InvalidInput("inference_mode must be 'argmax' or 'sample'")
        if self.kind == CONV_GUMBEL and self.weights is None:
            raise InvalidWeights("conv-gumbel predictor needs weights")

    def with_keep(self, keep) -> "PredictorConfig":
        return PredictorConfig(self.kind, tuple(keep), self.weights, self.temperature,
                               self.inference_mode)


def topk_counts(keep, total: int, n: int) -> list[int]:
    """Element counts of layers 1..n-1 for sigma-topk selection."""
    counts, left = [], total
    for i in range(n - 1):
        k = keep[i] if i < len(keep) else 0.0
        c = min(left, math.ceil(round(k * total, 9)))
        counts.append(c)
        left -= c
    return counts


def sigma_topk_masks(sigma, counts, n: int) -> MaskSet:
    """Consecutive runs of the (sigma desc, flat index asc) order form layers 1..n-1."""
    s = np.asarray(sigma, dtype=np.float64)
    flat = s.reshape(-1)
    order = np.lexsort((np.arange(flat.size), -flat))
    layer_of = np.full(flat.size, n - 1, dtype=np.int64)
    pos = 0
    for i, c in enumerate(counts[: n - 1]):
        layer_of[order[pos:pos + c]] = i
        pos += c
    return MaskSet.from_assignment(layer_of.reshape(s.shape), n)


def predictor_logits(stack, mu, sigma, remaining, temporal=None):
    """Run one conv stack; returns logits of shape ``(C, 2, H, W)``."""
    rem = remaining.astype(np.float64)
    parts = [mu * rem, sigma * rem]
    if temporal is not None:
        parts.append(np.asarray(temporal, dtype=np.float64))
    x = np.concatenate(parts, axis=0)
    w1, b1, w2, b2, w3, b3 = stack
    if x.shape[0] != w1.shape[1]:
        raise InvalidWeights(f"predictor expects {w1.shape[1]} input channels, got {x.shape[0]}")
    h = leaky_relu(conv2d(x, w1, b1), LEAKY_SLOPE)
    h = leaky_relu(conv2d(h, w2, b2), LEAKY_SLOPE)
    out = conv2d(h, w3, b3)
    C = mu.shape[0]
    return out.reshape(C, 2, *mu.shape[1:])


def gumbel_softmax(logits, temperature, rng, axis=1):
    g = -np.log(-np.log(rng.uniform(1e-12, 1.0, logits.shape)))
    z = (logits + g) / temperature
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _temporal_for_layer(temporal, i):
    if temporal is None:
        return None
    if isinstance(temporal, (list, tuple)):
        return temporal[i]
    return temporal


def predict_masks(field: GaussianField, temporal, cfg: PredictorConfig, n: int,
                  rng: np.random.Generator | None = None, counts=None) -> MaskSet:
    """Predict an ``n``-layer partition from the Gaussian field.

    ``temporal`` is ``None`` (image mode), one ``(F, H, W)`` grid, or a list
    giving layer ``i`` its own grid. ``counts`` overrides sigma-topk keep
    fractions with explicit element counts (what the container stores).
    """
    if n < 1:
        raise InvalidInput("need at least one layer")
    mu = field.mu
    sigma = field.sigma
    if cfg.kind == SIGMA_TOPK:
        if counts is None:
            counts = topk_counts(cfg.keep, mu.size, n)
        return sigma_topk_masks(sigma, counts, n)

    w = cfg.weights
    if w.channels != mu.shape[0]:
        raise InvalidWeights(f"predictor built for C={w.channels}, latent has C={mu.shape[0]}")
    if n - 1 > len(w.stacks):
        raise InvalidWeights(f"{n - 1} predicted layers need {n - 1} stacks, file has {len(w.stacks)}")
    sampling = cfg.inference_mode == "sample"
    if sampling and rng is None:
        rng = np.random.default_rng(0)
    remaining = np.ones(mu.shape, dtype=bool)
    stack_masks = []
    for i in range(n - 1):
        t = _temporal_for_layer(temporal, i)
        if w.video:
            if t is None:
                raise InvalidInput("video predictor needs temporal features")
            t = np.asarray(t, dtype=np.float64)
            if t.shape != (w.temporal_channels, *mu.shape[1:]):
                raise InvalidInput(f"temporal features {t.shape} do not match latent grid")
        else:
            t = None
        logits = predictor_logits(w.stacks[i], mu, sigma, remaining, t)
        if sampling:
            logits = gumbel_softmax(logits, cfg.temperature, rng)
        keep = (logits[:, 1] > logits[:, 0]) & remaining
        stack_masks.append(keep)
        remaining &= ~keep
    stack_masks.append(remaining)
    return MaskSet(np.stack(stack_masks))


def partition(latent: LatentTensor, masks: MaskSet) -> list[np.ndarray]:
    if masks.dims != latent.dims:
        raise InvalidMaskSet(f"mask dims {masks.dims} != latent dims {latent.dims}")
    flat = latent.flat
    return [flat[m.reshape(-1)].copy() for m in masks.stack]


def reconstruct(seq, mask) -> LatentTensor:
    bits = np.asarray(getattr(mask, "bits", mask), dtype=bool)
    seq = np.asarray(seq, dtype=np.int64).reshape(-1)
    idx = np.flatnonzero(bits.reshape(-1))
    if seq.size != idx.size:
        raise InvalidInput(f"sequence has {seq.size} values, mask selects {idx.size}")
    out = np.zeros(bits.size, dtype=np.int64)
    out[idx] = seq
    return LatentTensor(out.reshape(bits.shape))


def aggregate(layers, masks, field: GaussianField) -> np.ndarray:
    """Sum decoded layers 1..i and mean-fill every element none of them covers."""
    out = np.array(field.mu, dtype=np.float64, copy=True)
    covered = np.zeros(out.shape, dtype=bool)
    total = np.zeros(out.shape, dtype=np.float64)
    for layer, mask in zip(layers, masks):
        bits = np.asarray(getattr(mask, "bits", mask), dtype=bool)
        vals = getattr(layer, "values", layer)
        total += vals
        covered |= bits
    out[covered] = total[covered]
    return out
