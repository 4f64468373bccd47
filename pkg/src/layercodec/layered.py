"""Encode/decode one latent as side info plus ``n`` independently coded layers.

This is the adaptive stack shared by the image path and by the motion and
residual coders of the video path: side info -> Gaussian field -> masks ->
per-layer range coding, and on the way back prefix decode -> mean-fill.

Predictor parameters carried in the container so the decoder can re-derive
the masks:

* sigma-topk: ``u8 k`` then ``k`` x ``u32`` element counts of layers 1..k
* conv-gumbel: ``u32`` CRC-32 of the predictor weights file
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import rangecoder
from .entropy import (GaussianField, SideInfo, element_bits, expand_side_info,
                      extract_side_info, side_info_rate)
from .errors import FormatError, InvalidWeights
from .partition import (CONV_GUMBEL, PREDICTOR_KINDS, SIGMA_TOPK, PredictorConfig,
                        predict_masks, reconstruct, topk_counts)
from .tensors import LatentTensor, MaskSet

_KIND_NAMES = {v: k for k, v in PREDICTOR_KINDS.items()}


@dataclass
class LayeredLatent:
    latent: LatentTensor
    side: SideInfo
    field: GaussianField
    masks: MaskSet
    payloads: list            # bytes per layer (empty bytes if not entropy coded)
    estimated_bits: list      # model rate per layer
    predictor_params: bytes

    @property
    def side_bytes(self) -> bytes:
        return self.side.to_bytes()

    @property
    def side_bits(self) -> int:
        return side_info_rate(self.side)

    def prefix_estimate(self, i: int) -> float:
        """Model bits of side info plus layers 1..i."""
        return self.side_bits + float(sum(self.estimated_bits[:i]))


def pack_predictor_params(cfg: PredictorConfig, counts=None) -> bytes:
    if cfg.kind == SIGMA_TOPK:
        return struct.pack(f"<B{len(counts)}I", len(counts), *counts)
    return struct.pack("<I", cfg.weights.checksum())


def unpack_predictor_params(kind: int, data: bytes):
    """Return ``(params, consumed)``; params are counts or a weights checksum."""
    name = _KIND_NAMES.get(kind)
    if name == SIGMA_TOPK:
        if len(data) < 1:
            raise FormatError("predictor params truncated")
        k = data[0]
        if len(data) < 1 + 4 * k:
            raise FormatError("predictor params truncated")
        return list(struct.unpack_from(f"<{k}I", data, 1)), 1 + 4 * k
    if name == CONV_GUMBEL:
        if len(data) < 4:
            raise FormatError("predictor params truncated")
        return struct.unpack_from("<I", data)[0], 4
    raise FormatError(f"unknown predictor kind {kind}")


def encode_layers(latent: LatentTensor, cfg: PredictorConfig, n: int, temporal=None,
                  entropy_code: bool = True) -> LayeredLatent:
    side = extract_side_info(latent)
    field = expand_side_info(side, latent.dims)
    counts = None
    if cfg.kind == SIGMA_TOPK:
        counts = topk_counts(cfg.keep, latent.values.size, n)
    masks = predict_masks(field, temporal, cfg, n, counts=counts)
    bits = element_bits(latent, field)
    flat_vals = latent.flat
    flat_mu = field.mu.reshape(-1)
    flat_sig = field.sigma_idx.reshape(-1)
    payloads, estimates = [], []
    for m in masks.stack:
        sel = m.reshape(-1)
        estimates.append(float(bits[m].sum()))
        if entropy_code:
            payloads.append(rangecoder.encode_values(flat_vals[sel], flat_mu[sel], flat_sig[sel]))
        else:
            payloads.append(b"")
    return LayeredLatent(latent, side, field, masks, payloads, estimates,
                         pack_predictor_params(cfg, counts))


def derive_masks(field: GaussianField, kind: int, params, n: int, temporal=None,
                 weights=None) -> MaskSet:
    """Decoder-side mask re-derivation from decoded side info."""
    name = _KIND_NAMES[kind]
    if name == SIGMA_TOPK:
        return predict_masks(field, None, PredictorConfig(SIGMA_TOPK, ()), n, counts=params)
    if weights is None:
        raise InvalidWeights("conv-gumbel stream needs the predictor weights to decode")
    if weights.checksum() != params:
        raise InvalidWeights("predictor weights do not match the ones used to encode")
    return predict_masks(field, temporal, PredictorConfig(CONV_GUMBEL, (), weights), n)


def decode_layers(dims, side_bytes: bytes, payloads, kind: int, params, n: int,
                  temporal=None, weights=None):
    """Decode the available layer payloads; returns ``(field, masks, layers)``."""
    side = SideInfo.from_bytes(side_bytes, dims)
    field = expand_side_info(side, dims)
    masks = derive_masks(field, kind, params, n, temporal, weights)
    flat_mu = field.mu.reshape(-1)
    flat_sig = field.sigma_idx.reshape(-1)
    layers = []
    for payload, m in zip(payloads, masks.stack):
        sel = m.reshape(-1)
        vals = rangecoder.decode_values(payload, flat_mu[sel], flat_sig[sel])
        layers.append(reconstruct(vals, m))
    return field, masks, layers


def aggregate_prefix(latent: LatentTensor, field: GaussianField, masks: MaskSet, i: int) -> np.ndarray:
    """Encoder-side shortcut for the decoder's prefix-``i`` aggregate (no range decoding)."""
    covered = masks.prefix(i)
    return np.where(covered, latent.values, field.mu)
