import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st
from hypothesis.extra.numpy import arrays

from layercodec.errors import InvalidInput, InvalidMaskSet
from layercodec.tensors import (LatentTensor, LayerMask, MaskSet, PixelImage, decode_netpbm,
                                encode_netpbm, flatten_index, quantize, round_half_away,
                                unflatten_index)


def test_rounding_is_half_away_from_zero():
    assert quantize(np.array([[[2.5, -2.5, 0.5, -0.5, 1.49]]])).values.tolist() == [[[3, -3, 1, -1, 1]]]


def test_quantize_clamps():
    assert quantize(np.array([[[300.0, -300.0]]])).values.tolist() == [[[127, -127]]]


def test_quantize_zeros():
    q = quantize(np.zeros((2, 3, 4)))
    assert q.dims == (2, 3, 4) and not q.values.any()


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_quantize_rejects_non_finite(bad):
    with pytest.raises(InvalidInput):
        quantize(np.array([[[0.0, bad]]]))


@given(arrays(np.int64, (2, 3, 3), elements=st.integers(-127, 127)))
def test_quantize_idempotent_on_integers(a):
    assert np.array_equal(quantize(a.astype(float)).values, a)
    assert np.array_equal(quantize(quantize(a).values).values, a)


def test_latent_rejects_out_of_range():
    with pytest.raises(InvalidInput):
        LatentTensor(np.array([[[128]]]))
    with pytest.raises(InvalidInput):
        LatentTensor(np.zeros((2, 2)))


def test_flatten_examples():
    assert flatten_index(0, 0, 0, (3, 5, 7)) == 0
    assert flatten_index(1, 0, 0, (2, 16, 16)) == 256
    assert flatten_index(0, 1, 2, (1, 16, 16)) == 18


def test_flatten_out_of_range():
    with pytest.raises(IndexError):
        flatten_index(0, 16, 0, (1, 16, 16))
    with pytest.raises(IndexError):
        flatten_index(-1, 0, 0, (1, 16, 16))


@given(st.integers(1, 4), st.integers(1, 5), st.integers(1, 6), st.data())
def test_flatten_is_bijection(C, H, W, data):
    k = data.draw(st.integers(0, C * H * W - 1))
    c, h, w = unflatten_index(k, (C, H, W))
    assert flatten_index(c, h, w, (C, H, W)) == k
    # agrees with numpy's C-order flattening
    assert np.ravel_multi_index((c, h, w), (C, H, W)) == k


def test_maskset_disjoint_and_covering():
    a = np.array([[[1, 0], [0, 1]]], bool)
    MaskSet.from_masks([a, ~a])
    with pytest.raises(InvalidMaskSet):
        MaskSet.from_masks([a, a])
    with pytest.raises(InvalidMaskSet):
        MaskSet.from_masks([a, np.zeros_like(a)])


def test_layer_mask_index():
    m = MaskSet.from_masks([np.ones((1, 2, 2), bool)])
    assert isinstance(m[0], LayerMask) and m[0].layer_index == 1
    assert m.prefix(0).sum() == 0 and m.prefix(1).all()


def test_pixel_image_range():
    with pytest.raises(InvalidInput):
        PixelImage(np.full((2, 2, 1), 256))
    with pytest.raises(InvalidInput):
        PixelImage(np.zeros((2, 2, 2), np.uint8))


@given(st.integers(1, 9), st.integers(1, 9), st.sampled_from([1, 3]), st.integers(0, 2**32 - 1))
def test_netpbm_round_trip(h, w, c, seed):
    img = PixelImage(np.random.default_rng(seed).integers(0, 256, (h, w, c)).astype(np.uint8))
    data = encode_netpbm(img)
    assert data.startswith(b"P5" if c == 1 else b"P6")
    assert decode_netpbm(data) == img


def test_netpbm_header_comments():
    data = b"P5\n# a comment\n2 1\n# another\n255\n\x00\xff"
    assert decode_netpbm(data).samples[:, :, 0].tolist() == [[0, 255]]


def test_netpbm_rejects_maxval():
    with pytest.raises(Exception):
        decode_netpbm(b"P5 1 1 65535\n\x00\x00")


def test_round_half_away_scalar():
    assert round_half_away(-0.5) == -1 and round_half_away(0.49) == 0
