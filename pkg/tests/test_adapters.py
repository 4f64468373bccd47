import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st

from layercodec.adapters import (AdapterWeights, TaskHead, adapt_image, adapt_video,
                                 adapter_param_count, adapter_residual, pad_refs,
                                 param_count_report)
from layercodec.errors import InvalidInput, InvalidWeights
from layercodec.objectives import adapter_loss
from layercodec.tensors import PixelImage


def rand_image(seed, shape=(12, 10, 1)):
    return PixelImage(np.random.default_rng(seed).integers(0, 256, shape).astype(np.uint8))


def naive_conv(x, w, b):
    cin, H, W = x.shape
    out = np.zeros((w.shape[0], H, W))
    for o in range(w.shape[0]):
        for y in range(H):
            for xx in range(W):
                acc = b[o]
                for i in range(cin):
                    for ky in range(3):
                        for kx in range(3):
                            sy, sx = y + ky - 1, xx + kx - 1
                            if 0 <= sy < H and 0 <= sx < W:
                                acc += w[o, i, ky, kx] * x[i, sy, sx]
                out[o, y, xx] = acc
    return out


def naive_deconv(x, w, b):
    # scatter form of a stride-1 transposed conv with padding 1; w is (in, out, 3, 3)
    cin, H, W = x.shape
    out = np.zeros((w.shape[1], H, W)) + np.asarray(b)[:, None, None]
    for i in range(cin):
        for y in range(H):
            for xx in range(W):
                for ky in range(3):
                    for kx in range(3):
                        ty, tx = y + ky - 1, xx + kx - 1
                        if 0 <= ty < H and 0 <= tx < W:
                            out[:, ty, tx] += x[i, y, xx] * w[i, :, ky, kx]
    return out


def lrelu(a):
    return np.where(a > 0, a, 0.01 * a)


def oracle_residual(img, w, refs=None):
    t = {k: v.astype(np.float64) for k, v in w.tensors.items()}
    x = img.as_float().transpose(2, 0, 1) / 255
    h = lrelu(naive_conv(x, t["proj_w"], t["proj_b"]))
    if refs is not None:
        r = np.concatenate([f.as_float().transpose(2, 0, 1) for f in refs]) / 255
        h = h + lrelu(naive_conv(r, t["ref_w"], t["ref_b"]))
    h = h + naive_conv(lrelu(naive_conv(h, t["res_a_w"], t["res_a_b"])), t["res_b_w"], t["res_b_b"])
    return (naive_deconv(h, t["deconv_w"], t["deconv_b"]) * 255).transpose(1, 2, 0)


@pytest.mark.parametrize("channels", [1, 3])
def test_zero_weights_identity(channels):
    for seed in range(5):
        img = rand_image(seed, (9, 11, channels))
        assert adapt_image(img, AdapterWeights.zeros(channels)) == img
        assert not adapter_residual(img, AdapterWeights.zeros(channels)).any()


@pytest.mark.parametrize("channels", [1, 3])
def test_image_adapter_matches_oracle(channels):
    img = rand_image(1, (7, 9, channels))
    w = AdapterWeights.random(channels, seed=5, scale=0.2)
    assert np.max(np.abs(adapter_residual(img, w) - oracle_residual(img, w))) < 1e-6


def test_video_adapter_matches_oracle_with_equal_refs():
    img = rand_image(2, (8, 8, 1))
    w = AdapterWeights.random(1, video=True, seed=6, scale=0.2)
    got = adapter_residual(img, w, [img, img, img])
    assert np.max(np.abs(got - oracle_residual(img, w, [img] * 3))) < 1e-6


def test_video_adapter_zero_identity_and_padding():
    cur, old = rand_image(3), rand_image(4)
    assert adapt_video(cur, [old], AdapterWeights.zeros(1, video=True)) == cur
    assert pad_refs([cur, old]) == [cur, old, old]
    w = AdapterWeights.random(1, video=True, seed=1)
    assert adapt_video(cur, [old], w) == adapt_video(cur, [old, old, old], w)
    with pytest.raises(InvalidInput):
        pad_refs([])


def test_mode_mismatch():
    img = rand_image(0)
    with pytest.raises(InvalidWeights):
        adapt_image(img, AdapterWeights.zeros(1, video=True))
    with pytest.raises(InvalidWeights):
        adapt_image(rand_image(0, (4, 4, 3)), AdapterWeights.zeros(1))
    with pytest.raises(InvalidWeights):
        AdapterWeights(1, False, {"proj_w": np.zeros((8, 1, 3, 3))})


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 1000))
def test_output_dims_match_input(h, w, seed):
    img = rand_image(seed, (h, w, 1))
    out = adapt_image(img, AdapterWeights.random(1, seed=seed))
    assert out.samples.shape == img.samples.shape


def test_weights_file_round_trip(tmp_path):
    for video in (False, True):
        w = AdapterWeights.random(3, video=video, seed=2)
        p = tmp_path / f"a{video}.eacw"
        w.save(p)
        back = AdapterWeights.load(p)
        assert back.video == video and np.array_equal(back.flat(), w.flat())


def test_param_counts_by_hand():
    # proj 8*3*9+8, residual block 2*(8*8*9+8), deconv 8*3*9+3
    assert adapter_param_count(3) == 224 + 1168 + 219 == 1611
    # plus the reference conv over 9 stacked channels: 8*9*9+8
    assert adapter_param_count(3, video=True) == 1611 + 656 == 2267
    assert adapter_param_count(1) == 80 + 1168 + 73
    assert AdapterWeights.zeros(3).flat().size == 1611


def test_param_count_report():
    rep = param_count_report(AdapterWeights.zeros(3), TaskHead("A", 3))
    assert rep["adapter"] == 1611 and rep["head"] == 67
    assert rep["ratio"] == pytest.approx(1611 / 67)
    assert "0.17 M" in rep["text"] and "25.56 M" in rep["text"]
    assert rep["reference_ratio"] == pytest.approx(0.17 / 25.56)
    zero = param_count_report({"channels": 0, "width": 0}, TaskHead("A", 0))
    assert zero["adapter"] == 0 and zero["head"] == 0 and zero["ratio"] == 0.0


def test_task_heads():
    flat = PixelImage(np.full((16, 24, 1), 77, np.uint8))
    assert np.allclose(TaskHead("A")(flat), 77) and TaskHead("A")(flat).shape == (2, 3)
    assert not TaskHead("B")(flat).any()
    step = np.zeros((8, 8, 1), np.uint8)
    step[:, 4:] = 255
    e = TaskHead("B")(PixelImage(step))
    assert e[:, 0].max() == 0 and e[:, 3].min() > 0 and e[:, 4].min() > 0
    with pytest.raises(InvalidInput):
        TaskHead("C")


def test_zero_adapter_leaves_task_loss_unchanged():
    img = rand_image(7, (16, 16, 1))
    target = np.random.default_rng(0).normal(size=(2, 2))
    head = TaskHead("A")
    assert adapter_loss(head(adapt_image(img, AdapterWeights.zeros(1))), target) == \
        adapter_loss(head(img), target)
