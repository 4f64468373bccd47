import math

import numpy as np
import pytest

from layercodec.errors import InvalidInput
from layercodec.image import encode_image
from layercodec.metrics import bpp, psnr
from layercodec.partition import CONV_GUMBEL, ConvPredictorWeights, PredictorConfig
from layercodec.sweep import dump_masks, mask_images, rd_sweep, rows_to_csv
from layercodec.synthetic import noise_image, structured_image
from layercodec.tensors import PixelImage, read_image


def test_psnr_examples():
    a = PixelImage(np.zeros((8, 8, 1), np.uint8))
    b = PixelImage(np.full((8, 8, 1), 16, np.uint8))
    assert psnr(a, a) == 100.0
    assert psnr(a, b) == pytest.approx(10 * math.log10(255 ** 2 / 256))
    assert psnr(a, b) == pytest.approx(24.048404, abs=1e-6)
    # the often quoted 24.0486 matches to 3e-4 only
    assert psnr(a, b) == pytest.approx(24.0486, abs=3e-4)
    assert psnr(a, b) == psnr(b, a)
    with pytest.raises(InvalidInput):
        psnr(a, PixelImage(np.zeros((8, 9, 1), np.uint8)))


def test_bpp_examples():
    assert bpp(1000, 100 * 100) == pytest.approx(0.8)
    enc = encode_image(structured_image(0), 3, PredictorConfig(keep=(0.2, 0.3)), q=4)
    vals = [enc.bpp(i) for i in range(4)]
    assert vals == sorted(vals)
    one = encode_image(structured_image(0), 1, q=4)
    assert one.bpp(1) == bpp(len(one.data), 64 * 64)
    with pytest.raises(InvalidInput):
        bpp(1, 0)


def test_rd_sweep_rows():
    rows = rd_sweep([structured_image(1)], [8.0], [1.0], n=2)
    assert [r["layer"] for r in rows] == [1, 2, "human"]
    assert rows[1]["bpp"] == rows[2]["bpp"]
    assert rows[0]["bpp"] < rows[2]["bpp"]


def test_rd_sweep_q_lowers_rate():
    rows = rd_sweep([noise_image(0)], [2.0, 8.0], [1.0], n=2)
    human = [r["bpp"] for r in rows if r["layer"] == "human"]
    assert human[1] < human[0]


def test_rd_sweep_csv_deterministic():
    corpus = [structured_image(s) for s in range(2)]
    a = rows_to_csv(rd_sweep(corpus, [8.0], [1.0, 10.0], n=2, tune=True))
    b = rows_to_csv(rd_sweep(corpus, [8.0], [1.0, 10.0], n=2, tune=True))
    assert a == b
    assert a.splitlines()[0] == "image,q,lam,layer,bpp,psnr,task_loss"
    assert len(a.splitlines()) == 1 + 2 * 2 * 3


def test_dump_masks_single_layer(tmp_path):
    enc = encode_image(structured_image(2), 1, q=4)
    paths = dump_masks(enc.data, tmp_path)
    assert len(paths) == 1
    assert np.all(read_image(paths[0]).samples == 255)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_dump_masks_union_is_white(tmp_path, n):
    enc = encode_image(structured_image(3), n, PredictorConfig(keep=tuple([0.15] * (n - 1))), q=4)
    imgs = [read_image(p).samples for p in dump_masks(enc.data, tmp_path)]
    assert len(imgs) == n
    assert np.all(np.maximum.reduce(imgs) == 255)


def test_dump_masks_layer_one_bound():
    enc = encode_image(structured_image(4), 2, PredictorConfig(keep=(0.25,)), q=4)
    img = mask_images(enc.data)[0].samples
    spatial = img.size
    assert (img == 255).sum() <= min(spatial, math.ceil(0.25 * 64 * spatial))
    assert set(np.unique(img)) <= {0, 255}


def test_dump_masks_conv_predictor():
    w = ConvPredictorWeights.random(64, 0, 1, seed=1)
    enc = encode_image(structured_image(5), 2, PredictorConfig(CONV_GUMBEL, (), w), q=4)
    imgs = mask_images(enc.data, w)
    assert np.all(np.maximum(imgs[0].samples, imgs[1].samples) == 255)
