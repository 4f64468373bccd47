"""Still-image codec: blockwise DCT analysis/synthesis around the layered stack.

Each 8x8 block of each colour plane becomes one spatial position of a latent
with 64 channels per plane (channel ``plane * 64 + u * 8 + v`` holds DCT
coefficient ``(u, v)``). Samples are centred by -128 before the orthonormal
DCT-II and coefficients are divided by the quality scale ``q``.

Image params block (modes 0 and 1)::

    q16       u16   q in steps of 1/16
    height    u16   original image height
    width     u16   original image width
    channels  u8    1 or 3
    predictor params (see :mod:`layercodec.layered`)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from . import container as ct
from .entropy import GaussianField
from .errors import InvalidInput
from .layered import LayeredLatent, decode_layers, encode_layers, unpack_predictor_params
from .partition import PREDICTOR_KINDS, PredictorConfig, aggregate
from .tensors import MaskSet, PixelImage, quantize, round_half_away

BLOCK = 8
COEFFS = BLOCK * BLOCK
Q_STEPS = 16
_IMG_PARAMS = struct.Struct("<HHHB")


@dataclass(frozen=True)
class TransformConfig:
    q: float = 1.0

    def __post_init__(self):
        q16 = int(round_half_away(self.q * Q_STEPS))
        if not 1 <= q16 <= 0xFFFF:
            raise InvalidInput(f"quality scale {self.q} outside (0, 4096)")
        object.__setattr__(self, "q", q16 / Q_STEPS)

    @property
    def q16(self) -> int:
        return int(round(self.q * Q_STEPS))


def pad_to_blocks(samples: np.ndarray, block: int = BLOCK) -> np.ndarray:
    """Edge-replicate ``(H, W, C)`` up to multiples of ``block``."""
    H, W = samples.shape[:2]
    ph, pw = (-H) % block, (-W) % block
    return np.pad(samples, ((0, ph), (0, pw), (0, 0)), mode="edge")


def _to_blocks(plane: np.ndarray) -> np.ndarray:
    H, W = plane.shape
    return plane.reshape(H // BLOCK, BLOCK, W // BLOCK, BLOCK).transpose(0, 2, 1, 3)


def _from_blocks(blocks: np.ndarray) -> np.ndarray:
    bh, bw = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3).reshape(bh * BLOCK, bw * BLOCK)


def analysis(image: PixelImage, cfg: TransformConfig = TransformConfig()) -> np.ndarray:
    """Real-valued latent ``(channels*64, Hp/8, Wp/8)``."""
    return forward_dct(pad_to_blocks(image.as_float()) - 128.0) / cfg.q


def forward_dct(planes: np.ndarray) -> np.ndarray:
    """``(H, W, P)`` with H, W multiples of 8 -> ``(P*64, H/8, W/8)``."""
    out = []
    for p in range(planes.shape[2]):
        coeffs = dctn(_to_blocks(planes[:, :, p]), type=2, norm="ortho", axes=(2, 3))
        out.append(coeffs.reshape(*coeffs.shape[:2], COEFFS).transpose(2, 0, 1))
    return np.concatenate(out, axis=0)


def inverse_dct(latent: np.ndarray) -> np.ndarray:
    """``(P*64, bh, bw)`` -> ``(bh*8, bw*8, P)`` real samples."""
    C, bh, bw = latent.shape
    if C % COEFFS:
        raise InvalidInput(f"latent channel count {C} is not a multiple of 64")
    planes = []
    for p in range(C // COEFFS):
        coeffs = latent[p * COEFFS:(p + 1) * COEFFS].transpose(1, 2, 0).reshape(bh, bw, BLOCK, BLOCK)
        planes.append(_from_blocks(idctn(coeffs, type=2, norm="ortho", axes=(2, 3))))
    return np.stack(planes, axis=2)


def synthesis_real(latent, cfg: TransformConfig, height: int, width: int) -> np.ndarray:
    x = inverse_dct(np.asarray(latent, dtype=np.float64) * cfg.q) + 128.0
    return x[:height, :width]


def synthesis(latent, cfg: TransformConfig = TransformConfig(), height=None, width=None) -> PixelImage:
    latent = np.asarray(latent, dtype=np.float64)
    height = latent.shape[1] * BLOCK if height is None else height
    width = latent.shape[2] * BLOCK if width is None else width
    x = synthesis_real(latent, cfg, height, width)
    return PixelImage(np.clip(round_half_away(x), 0, 255).astype(np.uint8))


@dataclass
class ImageEncoding:
    data: bytes
    layered: LayeredLatent
    transform: TransformConfig
    image_dims: tuple   # (height, width, channels)

    @property
    def header(self) -> ct.ContainerHeader:
        return ct.parse_header(self.data)

    def prefix_bytes(self, i: int) -> int:
        return self.header.prefix_size(i)

    def bpp(self, i: int) -> float:
        h, w, _ = self.image_dims
        return 8.0 * self.prefix_bytes(i) / (h * w)


def encode_image(image: PixelImage, n: int = 2, predictor: PredictorConfig | None = None,
                 q: float = 1.0, mode: int = ct.MODE_IMAGE, temporal=None,
                 entropy_code: bool = True) -> ImageEncoding:
    """analysis -> quantize -> side info -> masks -> per-layer range coding -> container."""
    predictor = predictor or PredictorConfig()
    cfg = TransformConfig(q)
    latent = quantize(analysis(image, cfg))
    layered = encode_layers(latent, predictor, n, temporal, entropy_code)
    params = (_IMG_PARAMS.pack(cfg.q16, image.height, image.width, image.channels)
              + layered.predictor_params)
    header = ct.ContainerHeader(mode, latent.dims, n, PREDICTOR_KINDS[predictor.kind], params)
    data = ct.write_container(header, layered.side_bytes, layered.payloads) if entropy_code else b""
    return ImageEncoding(data, layered, cfg, (image.height, image.width, image.channels))


@dataclass
class DecodedImage:
    image: PixelImage
    aggregated: np.ndarray
    field: GaussianField
    masks: MaskSet
    header: ct.ContainerHeader
    transform: TransformConfig


def parse_image_params(header: ct.ContainerHeader):
    if len(header.params) < _IMG_PARAMS.size:
        raise ct.FormatError("image params truncated")
    q16, h, w, ch = _IMG_PARAMS.unpack_from(header.params)
    pred, _ = unpack_predictor_params(header.predictor, header.params[_IMG_PARAMS.size:])
    return TransformConfig(q16 / Q_STEPS), h, w, ch, pred


def decode_image_full(data: bytes, layers_upto: int | None = None, weights=None,
                      temporal=None) -> DecodedImage:
    header, side, payloads = ct.read_container(data, layers_upto)
    if header.mode not in (ct.MODE_IMAGE, ct.MODE_VIDEO_INTRA):
        raise ct.FormatError(f"container mode {header.mode} is not an image")
    cfg, h, w, ch, pred = parse_image_params(header)
    field, masks, layers = decode_layers(header.dims, side, payloads, header.predictor, pred,
                                         header.n_layers, temporal, weights)
    agg = aggregate(layers, masks.stack[: len(layers)], field)
    img = synthesis(agg, cfg, h, w)
    if img.channels != ch:
        raise ct.FormatError("decoded channel count disagrees with header")
    return DecodedImage(img, agg, field, masks, header, cfg)


def decode_image(data: bytes, layers_upto: int | None = None, weights=None) -> PixelImage:
    return decode_image_full(data, layers_upto, weights).image
