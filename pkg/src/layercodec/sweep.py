"""Rate-distortion sweeps as CSV rows and per-layer mask dumps."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from . import container as ct
from .adapters import TaskHead
from .image import decode_image_full, encode_image
from .metrics import bpp, psnr
from .objectives import mse
from .partition import PredictorConfig
from .tensors import PixelImage, encode_netpbm
from .tuning import tune_stage1

CSV_FIELDS = ("image", "q", "lam", "layer", "bpp", "psnr", "task_loss")


def rd_sweep(corpus, qs, lams, n: int = 2, task: str = "A", predictor: PredictorConfig | None = None,
             tune: bool = False, jobs: int = 1) -> list[dict]:
    """One row per (image, q, lam, layer prefix ``1..n``) plus a ``human`` row.

    The ``human`` row is the full-latent decode, i.e. the same bytes as
    prefix ``n``.

    With ``tune`` the keep fractions are tuned per (q, lam) on the corpus
    before encoding; otherwise ``predictor`` is used as given and ``lam`` only
    labels the rows.
    """
    head = TaskHead(task)
    corpus = list(corpus)
    rows = []
    for q in qs:
        for lam in lams:
            cfg = predictor or PredictorConfig()
            if tune and n > 1:
                cfg = tune_stage1(corpus, n, lam, cfg, head, q=q, jobs=jobs).config
            for idx, im in enumerate(corpus):
                enc = encode_image(im, n, cfg, q=q)
                target = head(im)
                for i in list(range(1, n + 1)) + ["human"]:
                    k = n if i == "human" else i
                    dec = decode_image_full(enc.data, k).image
                    rows.append({
                        "image": idx, "q": q, "lam": lam, "layer": i,
                        "bpp": bpp(enc.prefix_bytes(k), im.height * im.width),
                        "psnr": psnr(dec, im),
                        "task_loss": mse(head(dec), target),
                    })
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def mask_images(data: bytes, weights=None) -> list[PixelImage]:
    """Channel-max projection of each layer mask, white where any channel is selected."""
    header = ct.parse_header(data)
    if header.mode not in (ct.MODE_IMAGE, ct.MODE_VIDEO_INTRA):
        raise ct.FormatError("mask dumps need an image container")
    dec = decode_image_full(data, 0, weights)
    return [PixelImage((m.any(axis=0) * 255).astype(np.uint8)[:, :, None]) for m in dec.masks.stack]


def dump_masks(data: bytes, out_dir, weights=None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(mask_images(data, weights), start=1):
        p = out / f"layer{i}.pgm"
        p.write_bytes(encode_netpbm(img))
        paths.append(p)
    return paths
