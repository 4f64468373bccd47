"""Task-specific adapters and the frozen toy task heads they feed.

Adapter forward pass, on samples scaled to [0, 1] as ``(C, H, W)``::

    h = lrelu(proj(x))                          # 3x3 conv, C -> width
    h = h + lrelu(ref(concat(r1, r2, r3)))      # video only, 3C -> width
    h = h + res_b(lrelu(res_a(h)))              # residual block, two 3x3 convs
    residual = 255 * deconv(h)                  # 3x3 transposed conv, width -> C

and the adapted image is ``clamp(xhat + residual, 0, 255)``. With all-zero
weights the residual is exactly zero.

Tensors are stored in the weights file in the order
``proj_w, proj_b, [ref_w, ref_b,] res_a_w, res_a_b, res_b_w, res_b_b,
deconv_w, deconv_b``; ``deconv_w`` is ``(width, C, 3, 3)`` (in, out).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import weightsfile
from .errors import InvalidInput, InvalidWeights
from .nn import conv2d, conv_transpose2d, f32, leaky_relu
from .tensors import PixelImage, round_half_away, to_gray

WIDTH = 8
KERNEL = 3
NUM_REFS = 3
LEAKY_SLOPE = 0.01

# Parameter counts quoted for the full-size models this toy setup mirrors.
REFERENCE_ADAPTER_PARAMS_M = 0.17
REFERENCE_RESNET50_PARAMS_M = 25.56


def adapter_shapes(channels: int, width: int = WIDTH, video: bool = False):
    k = KERNEL
    shapes = [("proj_w", (width, channels, k, k)), ("proj_b", (width,))]
    if video:
        shapes += [("ref_w", (width, NUM_REFS * channels, k, k)), ("ref_b", (width,))]
    shapes += [("res_a_w", (width, width, k, k)), ("res_a_b", (width,)),
               ("res_b_w", (width, width, k, k)), ("res_b_b", (width,)),
               ("deconv_w", (width, channels, k, k)), ("deconv_b", (channels,))]
    return shapes


@dataclass
class AdapterWeights:
    channels: int
    video: bool
    tensors: dict
    width: int = WIDTH

    def __post_init__(self):
        clean = {}
        for name, shape in adapter_shapes(self.channels, self.width, self.video):
            if name not in self.tensors:
                raise InvalidWeights(f"missing adapter tensor {name}")
            t = f32(self.tensors[name])
            if t.shape != shape:
                raise InvalidWeights(f"{name} has shape {t.shape}, expected {shape}")
            if not np.all(np.isfinite(t)):
                raise InvalidWeights(f"non-finite values in {name}")
            clean[name] = t
        self.tensors = clean

    @classmethod
    def zeros(cls, channels: int = 1, video: bool = False, width: int = WIDTH):
        return cls(channels, video,
                   {k: np.zeros(s) for k, s in adapter_shapes(channels, width, video)}, width)

    @classmethod
    def random(cls, channels: int = 1, video: bool = False, seed: int = 0, scale: float = 0.1,
               width: int = WIDTH):
        rng = np.random.default_rng(seed)
        return cls(channels, video,
                   {k: rng.normal(0, scale, s) for k, s in adapter_shapes(channels, width, video)},
                   width)

    def names(self):
        return [k for k, _ in adapter_shapes(self.channels, self.width, self.video)]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.tensors[k].reshape(-1) for k in self.names()])

    def with_flat(self, vec) -> "AdapterWeights":
        shapes = adapter_shapes(self.channels, self.width, self.video)
        parts = weightsfile.split(np.asarray(vec, dtype=np.float64), [s for _, s in shapes])
        return AdapterWeights(self.channels, self.video,
                              {k: p for (k, _), p in zip(shapes, parts)}, self.width)

    def param_count(self) -> int:
        return adapter_param_count(self.channels, self.width, self.video)

    def to_bytes(self) -> bytes:
        mode = weightsfile.MODE_VIDEO_ADAPTER if self.video else weightsfile.MODE_IMAGE_ADAPTER
        return weightsfile.pack(mode, self.channels, self.width, [self.tensors[k] for k in self.names()])

    @classmethod
    def from_bytes(cls, data: bytes) -> "AdapterWeights":
        mode, c, width, values = weightsfile.unpack(data)
        if mode not in (weightsfile.MODE_IMAGE_ADAPTER, weightsfile.MODE_VIDEO_ADAPTER):
            raise InvalidWeights(f"weights mode {mode} is not an adapter")
        video = mode == weightsfile.MODE_VIDEO_ADAPTER
        shapes = adapter_shapes(c, width, video)
        parts = weightsfile.split(values, [s for _, s in shapes])
        return cls(c, video, {k: p for (k, _), p in zip(shapes, parts)}, width)

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path):
        return cls.from_bytes(Path(path).read_bytes())


def adapter_param_count(channels: int, width: int = WIDTH, video: bool = False) -> int:
    return sum(int(np.prod(s)) for _, s in adapter_shapes(channels, width, video))


def _chw(img) -> np.ndarray:
    s = img.samples if isinstance(img, PixelImage) else np.asarray(img)
    if s.ndim == 2:
        s = s[:, :, None]
    return s.astype(np.float64).transpose(2, 0, 1)


def adapter_residual(xhat, w: AdapterWeights, refs=None) -> np.ndarray:
    """``f_psi`` output in pixel units, shaped ``(H, W, C)``."""
    x = _chw(xhat)
    if x.shape[0] != w.channels:
        raise InvalidWeights(f"adapter built for {w.channels} channels, image has {x.shape[0]}")
    t = w.tensors
    h = leaky_relu(conv2d(x / 255.0, t["proj_w"], t["proj_b"]), LEAKY_SLOPE)
    if w.video:
        if refs is None or len(refs) != NUM_REFS:
            raise InvalidInput(f"video adapter needs exactly {NUM_REFS} reference frames")
        r = np.concatenate([_chw(f) for f in refs], axis=0)
        if r.shape[1:] != x.shape[1:]:
            raise InvalidInput("reference frames must match the current frame size")
        h = h + leaky_relu(conv2d(r / 255.0, t["ref_w"], t["ref_b"]), LEAKY_SLOPE)
    h = h + conv2d(leaky_relu(conv2d(h, t["res_a_w"], t["res_a_b"]), LEAKY_SLOPE),
                   t["res_b_w"], t["res_b_b"])
    out = conv_transpose2d(h, t["deconv_w"], t["deconv_b"]) * 255.0
    return out.transpose(1, 2, 0)


def adapted_float(xhat, w: AdapterWeights, refs=None) -> np.ndarray:
    """``clamp(xhat + f_psi(...))`` as float ``(H, W, C)``, no rounding."""
    base = _chw(xhat).transpose(1, 2, 0)
    return np.clip(base + adapter_residual(xhat, w, refs), 0.0, 255.0)


def _as_image(a: np.ndarray) -> PixelImage:
    return PixelImage(np.clip(round_half_away(a), 0, 255).astype(np.uint8))


def adapt_image(xhat: PixelImage, w: AdapterWeights) -> PixelImage:
    if w.video:
        raise InvalidWeights("video adapter used on a still image")
    return _as_image(adapted_float(xhat, w))


def pad_refs(refs) -> list:
    """Newest-first list of exactly three references; short lists repeat the oldest."""
    refs = list(refs)
    if not refs:
        raise InvalidInput("at least one reference frame is required")
    refs = refs[:NUM_REFS]
    return refs + [refs[-1]] * (NUM_REFS - len(refs))


def adapt_video(xhat_t: PixelImage, refs, w: AdapterWeights) -> PixelImage:
    if not w.video:
        raise InvalidWeights("image adapter used on a video frame")
    return _as_image(adapted_float(xhat_t, w, pad_refs(refs)))


# --- frozen toy task heads ---------------------------------------------------

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T


@dataclass(frozen=True)
class TaskHead:
    """``"A"``: 8x8 block means of luma; ``"B"``: Sobel edge energy of luma / 255**2."""

    kind: str = "A"
    channels: int = 1

    def __post_init__(self):
        if self.kind not in ("A", "B"):
            raise InvalidInput(f"unknown task head {self.kind!r}")

    def __call__(self, img) -> np.ndarray:
        s = img.samples if isinstance(img, PixelImage) else np.asarray(img, dtype=np.float64)
        g = to_gray(s)
        if self.kind == "A":
            H, W = g.shape
            rows, cols = np.arange(0, H, 8), np.arange(0, W, 8)
            sums = np.add.reduceat(np.add.reduceat(g, rows, 0), cols, 1)
            cnt = np.add.reduceat(np.add.reduceat(np.ones_like(g), rows, 0), cols, 1)
            return sums / cnt
        gp = np.pad(g, 1, mode="edge")
        gx = conv2d(gp[None], _SOBEL_X[None, None])[0, 1:-1, 1:-1]
        gy = conv2d(gp[None], _SOBEL_Y[None, None])[0, 1:-1, 1:-1]
        return (gx * gx + gy * gy) / 255.0 ** 2

    def param_count(self) -> int:
        luma = 3 if self.channels == 3 else (1 if self.channels == 1 else 0)
        if self.channels == 0:
            return 0
        return luma + (64 if self.kind == "A" else 18)


def param_count_report(adapter: AdapterWeights | dict, head: TaskHead) -> dict:
    """Exact parameter counts of a toy adapter and head, plus their ratio."""
    if isinstance(adapter, AdapterWeights):
        a = adapter.param_count()
    else:
        a = adapter_param_count(adapter.get("channels", 1), adapter.get("width", WIDTH),
                                adapter.get("video", False))
    h = head.param_count()
    ratio = a / h if h else 0.0
    ref_ratio = REFERENCE_ADAPTER_PARAMS_M / REFERENCE_RESNET50_PARAMS_M
    text = "\n".join([
        f"adapter parameters: {a}",
        f"task head parameters: {h}",
        f"adapter / head ratio: {ratio:.6f}",
        "reference scale: adapter 0.17 M vs ResNet50 25.56 M parameters "
        f"(ratio {ref_ratio:.4f}, {100 * ref_ratio:.2f}%)",
        "the toy head is tiny, so the toy ratio exceeds 1; only the counting is comparable",
    ])
    return {"adapter": a, "head": h, "ratio": ratio, "reference_ratio": ref_ratio, "text": text}
