"""Tiny numpy building blocks for the predictor and adapter networks.

All feature maps are ``(channels, height, width)``; kernels are
``(out, in, k, k)`` with odd ``k``, stride 1 and zero padding ``k // 2`` so
spatial size is preserved.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d(x, w, b=None):
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    k = w.shape[-1]
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # (Cin, H, W, k, k)
    y = np.einsum("chwij,ocij->ohw", win, w, optimize=True)
    if b is not None:
        y += np.asarray(b, dtype=np.float64)[:, None, None]
    return y


def conv_transpose2d(x, w, b=None):
    """Stride-1 transposed convolution; ``w`` is ``(in, out, k, k)`` as in most frameworks."""
    w = np.asarray(w, dtype=np.float64)
    # stride 1 + padding k//2: equivalent to a correlation with the flipped, transposed kernel
    w_eq = np.flip(w, axis=(2, 3)).transpose(1, 0, 2, 3)
    return conv2d(x, w_eq, b)


def leaky_relu(x, slope=0.01):
    return np.where(x >= 0, x, slope * x)


def relu(x):
    return np.maximum(x, 0.0)


def f32(a) -> np.ndarray:
    """Round to float32 precision (what the weights file stores), kept as float64."""
    return np.asarray(a, dtype=np.float32).astype(np.float64)
