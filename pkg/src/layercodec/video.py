"""Motion-compensated video codec with per-branch reconstruction loops.

Branch ``b`` (1-based) consumes layers ``1..b`` of every frame; branch ``n``
sees the full latents and is the human-vision branch. Every branch keeps its
own frame buffer, and the encoder runs all ``n`` decode loops so its
reconstructions match any decoder bit for bit.

Per inter frame:

1. block matching of the source against the human-branch reference;
2. the ``(dx, dy)`` grid is a 2-channel latent coded by the layered stack
   (mode-2 container); branch ``b`` decodes motion prefix ``1..b``
   (mean-filled, rounded) and compensates against its own reference;
3. the residual ``source - human prediction`` is halved once if it exceeds
   +/-127 (recorded shift), DCT-transformed and coded by a second layered
   stack (mode-3 container); branch ``b`` adds its residual prefix
   ``1..b`` to its own prediction.

Mask predictor ``j`` (layers ``j < n``) receives temporal features computed
from branch ``j``'s previous reconstruction, so a decoder for branch ``b``
needs, and can compute, branches ``1..b``.

Sequence params (mode 4)::

    q16 u16 | frames u16 | gop u16 | flags u8 (bit 0: temporal ablation)

Residual params (mode 3)::

    q16 u16 | shift u8 | predictor params

Motion params (mode 2) are the predictor params alone.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import container as ct
from .errors import DecodeOrderError, FormatError, InvalidInput
from .image import (Q_STEPS, TransformConfig, encode_image, forward_dct, inverse_dct,
                    pad_to_blocks, parse_image_params, synthesis)
from .layered import (LayeredLatent, aggregate_prefix, decode_layers, encode_layers,
                      unpack_predictor_params)
from .motion import BLOCK, MotionField, block_grid, motion_compensate, motion_estimate
from .partition import PREDICTOR_KINDS, TEMPORAL_CHANNELS, PredictorConfig, aggregate
from .tensors import PixelImage, quantize, round_half_away, to_gray

_SEQ_PARAMS = struct.Struct("<HHHB")
_RES_PARAMS = struct.Struct("<HB")
MAX_REFS = 3


@dataclass
class VideoConfig:
    n: int = 2
    q: float = 1.0
    intra: PredictorConfig = field(default_factory=PredictorConfig)
    motion: PredictorConfig = field(default_factory=PredictorConfig)
    residual: PredictorConfig = field(default_factory=PredictorConfig)
    temporal_ablation: bool = False
    gop: int = 0  # 0: one intra frame, then inter to the end

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInput("need at least one layer")
        if self.gop < 0:
            raise InvalidInput("gop must be >= 0")
        self.q = TransformConfig(self.q).q

    def is_intra(self, t: int) -> bool:
        return t == 0 or (self.gop > 0 and t % self.gop == 0)


def temporal_features(frame: PixelImage | None, grid) -> np.ndarray:
    """Block means of (gray, x-gradient, y-gradient, block variance), scaled to ~[0, 1]."""
    BH, BW = grid
    if frame is None:
        return np.zeros((TEMPORAL_CHANNELS, BH, BW))
    g = to_gray(frame.samples) / 255.0
    gx = np.diff(g, axis=1, append=g[:, -1:])
    gy = np.diff(g, axis=0, append=g[-1:, :])
    H, W = g.shape
    rows, cols = np.arange(0, H, BLOCK), np.arange(0, W, BLOCK)
    cnt = np.add.reduceat(np.add.reduceat(np.ones_like(g), rows, 0), cols, 1)

    def bmean(a):
        return np.add.reduceat(np.add.reduceat(a, rows, 0), cols, 1) / cnt

    m = bmean(g)
    var = bmean(g * g) - m * m
    feats = np.stack([m, bmean(gx), bmean(gy), np.maximum(var, 0.0)])
    if feats.shape[1:] != (BH, BW):
        raise InvalidInput("frame does not match the latent grid")
    return feats


@dataclass
class FrameStats:
    intra: bool
    section_bytes: int
    motion_bits: list      # per branch: model bits of side info + motion layers 1..b
    residual_bits: list    # per branch: same for the residual (or intra) latent
    motion_payload_bits: list = field(default_factory=list)
    residual_payload_bits: list = field(default_factory=list)


@dataclass
class VideoEncoding:
    data: bytes
    recons: list           # recons[b][t]: branch b+1, frame t
    stats: list            # FrameStats per frame
    config: VideoConfig

    def branch(self, b: int) -> list:
        return self.recons[b - 1]


def _residual_hat(agg, q, shift, height, width):
    r = inverse_dct(np.asarray(agg) * q)[:height, :width]
    return round_half_away(r) * (1 << shift)


def _features_for(branches, grid, cfg: VideoConfig, available: int | None = None):
    """Temporal input of predictors 1..n-1 (branch j's latest frame, or zeros)."""
    n = cfg.n
    feats = []
    for j in range(max(n - 1, 0)):
        if cfg.temporal_ablation or (available is not None and j >= available):
            feats.append(temporal_features(None, grid))
        else:
            feats.append(temporal_features(branches[j][-1], grid))
    return feats


def _wrap(mode, dims, n, cfg: PredictorConfig, params: bytes, layered: LayeredLatent,
          entropy_code: bool) -> bytes:
    if not entropy_code:
        return b""
    header = ct.ContainerHeader(mode, dims, n, PREDICTOR_KINDS[cfg.kind], params)
    return ct.write_container(header, layered.side_bytes, layered.payloads)


def _payload_bits(layered: LayeredLatent):
    return [8 * len(p) for p in layered.payloads]


def encode_inter_frame(cur: PixelImage, branches, cfg: VideoConfig, entropy_code: bool = True):
    """Code one inter frame; returns ``(section_bytes, recons per branch, FrameStats)``."""
    n = cfg.n
    H, W = cur.height, cur.width
    grid = block_grid(H, W)
    feats = _features_for(branches, grid, cfg)

    mf = motion_estimate(cur, branches[n - 1][-1])
    mlat = mf.to_latent()
    mlay = encode_layers(mlat, cfg.motion, n, feats, entropy_code)
    preds = []
    for b in range(n):
        mb = MotionField.from_latent(aggregate_prefix(mlat, mlay.field, mlay.masks, b + 1))
        preds.append(motion_compensate(branches[b][-1], mb))

    res = cur.samples.astype(np.int64) - preds[n - 1].samples.astype(np.int64)
    shift = int(np.abs(res).max() > 127)
    res_s = np.clip(round_half_away(res / (1 << shift)), -127, 127)
    tcfg = TransformConfig(cfg.q)
    rlat = quantize(forward_dct(pad_to_blocks(res_s)) / tcfg.q)
    rlay = encode_layers(rlat, cfg.residual, n, feats, entropy_code)
    recons = []
    for b in range(n):
        rh = _residual_hat(aggregate_prefix(rlat, rlay.field, rlay.masks, b + 1), tcfg.q, shift, H, W)
        recons.append(PixelImage(np.clip(preds[b].samples + rh, 0, 255).astype(np.uint8)))

    section = b""
    if entropy_code:
        section = (_wrap(ct.MODE_VIDEO_MOTION, mlat.dims, n, cfg.motion, mlay.predictor_params,
                         mlay, True)
                   + _wrap(ct.MODE_VIDEO_RESIDUAL, rlat.dims, n, cfg.residual,
                           _RES_PARAMS.pack(tcfg.q16, shift) + rlay.predictor_params, rlay, True))
    stats = FrameStats(False, len(section),
                       [mlay.prefix_estimate(b + 1) for b in range(n)],
                       [rlay.prefix_estimate(b + 1) for b in range(n)],
                       _payload_bits(mlay), _payload_bits(rlay))
    return section, recons, stats


def _encode_intra_frame(cur: PixelImage, cfg: VideoConfig, entropy_code: bool):
    enc = encode_image(cur, cfg.n, cfg.intra, cfg.q, mode=ct.MODE_VIDEO_INTRA,
                       entropy_code=entropy_code)
    lay = enc.layered
    recons = [synthesis(aggregate_prefix(lay.latent, lay.field, lay.masks, b + 1), enc.transform,
                        cur.height, cur.width) for b in range(cfg.n)]
    stats = FrameStats(True, len(enc.data), [0.0] * cfg.n,
                       [lay.prefix_estimate(b + 1) for b in range(cfg.n)],
                       [], _payload_bits(lay))
    return enc.data, recons, stats


def encode_video(frames, cfg: VideoConfig | None = None, entropy_code: bool = True) -> VideoEncoding:
    cfg = cfg or VideoConfig()
    frames = list(frames)
    if not frames:
        raise InvalidInput("empty frame sequence")
    H, W, P = frames[0].height, frames[0].width, frames[0].channels
    if any((f.height, f.width, f.channels) != (H, W, P) for f in frames):
        raise InvalidInput("all frames must share dimensions")
    n = cfg.n
    branches = [deque(maxlen=MAX_REFS) for _ in range(n)]
    recons = [[] for _ in range(n)]
    sections, stats = [], []
    for t, frame in enumerate(frames):
        if cfg.is_intra(t):
            sec, rec, st = _encode_intra_frame(frame, cfg, entropy_code)
        else:
            sec, rec, st = encode_inter_frame(frame, branches, cfg, entropy_code)
        sections.append(sec)
        stats.append(st)
        for b in range(n):
            branches[b].append(rec[b])
            recons[b].append(rec[b])
    data = b""
    if entropy_code:
        params = _SEQ_PARAMS.pack(TransformConfig(cfg.q).q16, len(frames), cfg.gop,
                                  int(cfg.temporal_ablation))
        kind = PREDICTOR_KINDS[cfg.residual.kind]
        header = ct.ContainerHeader(ct.MODE_VIDEO_SEQUENCE, (P, H, W), n, kind, params)
        data = ct.write_container(header, b"", sections)
    return VideoEncoding(data, recons, stats, cfg)


# --- decoding ----------------------------------------------------------------

def _frame_sections(data: bytes, header: ct.ContainerHeader, verify: bool):
    """Slice frame sections; frame-level CRCs are only checked when ``verify``."""
    if verify:
        return ct.read_container(data)[2]
    pos = header.size + header.side_len + ct.CRC_BYTES
    out = []
    for length in header.lengths:
        if len(data) < pos + length:
            raise FormatError("sequence truncated")
        out.append(memoryview(data)[pos:pos + length])
        pos += length + ct.CRC_BYTES
    return out


def decode_video_branches(data: bytes, branch: int | None = None, weights=None) -> list:
    """Decode branches ``1..branch``; returns ``frames[b][t]``.

    ``weights`` maps ``"intra"``, ``"motion"`` and ``"residual"`` to
    :class:`ConvPredictorWeights` for conv-gumbel streams.
    """
    weights = weights or {}
    header = ct.parse_header(data)
    if header.mode != ct.MODE_VIDEO_SEQUENCE:
        raise FormatError(f"container mode {header.mode} is not a video sequence")
    n = header.n_layers
    branch = n if branch is None else branch
    if not 1 <= branch <= n:
        raise ct.RangeError(f"branch {branch} outside 1..{n}")
    q16, T, gop, flags = _SEQ_PARAMS.unpack_from(header.params)
    ablation = bool(flags & 1)
    P, H, W = header.dims
    grid = block_grid(H, W)
    sections = _frame_sections(data, header, verify=(branch == n))
    if len(sections) != T:
        raise FormatError("frame count disagrees with index table")
    vcfg = _DecodeCfg(n, ablation)
    branches = [deque(maxlen=MAX_REFS) for _ in range(branch)]
    out = [[] for _ in range(branch)]
    for t, sec in enumerate(sections):
        mode = ct.parse_header(sec).mode
        if mode == ct.MODE_VIDEO_INTRA:
            rec = _decode_intra(sec, branch, weights.get("intra"))
        elif mode == ct.MODE_VIDEO_MOTION:
            if not branches[0]:
                raise DecodeOrderError(f"inter frame {t} has no reference")
            rec = _decode_inter(sec, branch, branches, grid, vcfg, weights, H, W)
        else:
            raise FormatError(f"unexpected frame section mode {mode}")
        for b in range(branch):
            branches[b].append(rec[b])
            out[b].append(rec[b])
    return out


def decode_video(data: bytes, branch: int | None = None, weights=None) -> list:
    return decode_video_branches(data, branch, weights)[-1]


@dataclass
class _DecodeCfg:
    n: int
    temporal_ablation: bool


def _decode_intra(sec, branch, weights):
    header, side, payloads = ct.read_container(sec, branch)
    tcfg, h, w, ch, pred = parse_image_params(header)
    field_, masks, layers = decode_layers(header.dims, side, payloads, header.predictor, pred,
                                          header.n_layers, None, weights)
    return [synthesis(aggregate(layers[:b + 1], masks.stack[:b + 1], field_), tcfg, h, w)
            for b in range(branch)]


def _decode_inter(sec, branch, branches, grid, vcfg, weights, H, W):
    n = vcfg.n
    feats = _features_for(branches, grid, vcfg, available=branch)
    msize = ct.container_size(sec)
    mblob, rblob = sec[:msize], sec[msize:]

    mh, mside, mpay = ct.read_container(mblob, branch)
    if mh.mode != ct.MODE_VIDEO_MOTION:
        raise FormatError("expected a motion container")
    mpred, _ = unpack_predictor_params(mh.predictor, mh.params)
    mfield, mmasks, mlayers = decode_layers(mh.dims, mside, mpay, mh.predictor, mpred, n, feats,
                                            weights.get("motion"))

    rh, rside, rpay = ct.read_container(rblob, branch)
    if rh.mode != ct.MODE_VIDEO_RESIDUAL:
        raise FormatError("expected a residual container")
    q16, shift = _RES_PARAMS.unpack_from(rh.params)
    rpred, _ = unpack_predictor_params(rh.predictor, rh.params[_RES_PARAMS.size:])
    rfield, rmasks, rlayers = decode_layers(rh.dims, rside, rpay, rh.predictor, rpred, n, feats,
                                            weights.get("residual"))
    q = q16 / Q_STEPS
    recons = []
    for b in range(branch):
        magg = aggregate(mlayers[:b + 1], mmasks.stack[:b + 1], mfield)
        pred = motion_compensate(branches[b][-1], MotionField.from_latent(magg))
        ragg = aggregate(rlayers[:b + 1], rmasks.stack[:b + 1], rfield)
        rh_ = _residual_hat(ragg, q, shift, H, W)
        recons.append(PixelImage(np.clip(pred.samples + rh_, 0, 255).astype(np.uint8)))
    return recons
