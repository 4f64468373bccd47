import struct

import numpy as np
import pytest

from layercodec import container as ct
from layercodec.errors import DecodeOrderError, CorruptionError
from layercodec.partition import PredictorConfig
from layercodec.tensors import PixelImage
from layercodec.synthetic import static_sequence, translating_square
from layercodec.video import (VideoConfig, decode_video, decode_video_branches, encode_video,
                              temporal_features)

SMALL = dict(size=(48, 48), square=14)


def frames_equal(a, b):
    return len(a) == len(b) and all(x == y for x, y in zip(a, b))


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("ablation", [False, True])
def test_encoder_decoder_branches_identical(n, ablation):
    frames = translating_square(5, **SMALL)
    keep = tuple([0.2] * (n - 1)) or (0.25,)
    p = PredictorConfig(keep=keep)
    enc = encode_video(frames, VideoConfig(n, 1.0, p, p, p, temporal_ablation=ablation))
    dec = decode_video_branches(enc.data)
    for b in range(n):
        assert frames_equal(enc.recons[b], dec[b])
    for b in range(1, n + 1):
        assert frames_equal(decode_video(enc.data, b), enc.branch(b))


def test_human_branch_equals_unlayered_loop():
    frames = translating_square(4, **SMALL)
    flat = encode_video(frames, VideoConfig(1))
    for n in (2, 3):
        p = PredictorConfig(keep=tuple([0.3] * (n - 1)))
        enc = encode_video(frames, VideoConfig(n, 1.0, p, p, p))
        assert frames_equal(enc.branch(n), flat.branch(1))


def test_static_scene_is_cheap():
    frames = static_sequence(4)
    enc = encode_video(frames, VideoConfig(2, 1.0))
    intra = enc.stats[0]
    payload = lambda st: sum(st.motion_payload_bits) + sum(st.residual_payload_bits)
    for st in enc.stats[1:]:
        assert payload(st) < 0.10 * payload(intra)
        assert st.section_bytes < 0.5 * intra.section_bytes


def test_two_frame_static_sequence():
    # low-contrast content keeps the DC coefficient inside the latent range at q=1
    r = np.random.default_rng(0)
    img = PixelImage((128 + r.integers(-10, 11, (32, 32, 1))).astype(np.uint8))
    enc = encode_video([img, img], VideoConfig(1, 1.0))
    f0, f1 = decode_video(enc.data)
    assert np.max(np.abs(f0.as_float() - img.as_float())) <= 1
    # the second frame only adds a quantized residual of the first frame's rounding error
    assert np.max(np.abs(f1.as_float() - f0.as_float())) <= 2


def test_intra_dc_saturates_at_unit_q():
    # 8 * (mean - 128) leaves [-127, 127] for block means outside ~[112, 144]
    img = PixelImage(np.full((8, 8, 1), 200, np.uint8))
    f0 = decode_video(encode_video([img], VideoConfig(1, 1.0)).data)[0]
    assert f0.samples.max() < 200


def _residual_layer_offset(data, t, layer):
    h = ct.parse_header(data)
    start = h.prefix_size(t)
    sec = data[start:start + h.lengths[t]]
    msize = ct.container_size(sec)
    rh = ct.parse_header(sec[msize:])
    return start + msize + rh.prefix_size(layer - 1) + 1


def test_corrupt_residual_layer_two_keeps_branch_one():
    frames = translating_square(5, **SMALL)
    p = PredictorConfig(keep=(0.3,))
    enc = encode_video(frames, VideoConfig(2, 1.0, p, p, p))
    bad = bytearray(enc.data)
    for t in range(1, 5):
        bad[_residual_layer_offset(enc.data, t, 2)] ^= 0x5A
    assert frames_equal(decode_video(bytes(bad), 1), enc.branch(1))
    with pytest.raises(CorruptionError):
        decode_video(bytes(bad), 2)


def test_missing_reference():
    frames = translating_square(3, **SMALL)
    enc = encode_video(frames, VideoConfig(1))
    h, _, secs = ct.read_container(enc.data)
    q16, T, gop, flags = struct.unpack("<HHHB", h.params)
    h2 = ct.ContainerHeader(h.mode, h.dims, h.n_layers, h.predictor,
                            struct.pack("<HHHB", q16, T - 1, gop, flags))
    broken = ct.write_container(h2, b"", secs[1:])
    with pytest.raises(DecodeOrderError):
        decode_video(broken)


def test_gop_refresh():
    frames = translating_square(5, **SMALL)
    enc = encode_video(frames, VideoConfig(2, gop=2))
    assert [s.intra for s in enc.stats] == [True, False, True, False, True]
    assert frames_equal(decode_video(enc.data), enc.branch(2))


def test_temporal_features_shape_and_zeros():
    f = translating_square(1, **SMALL)[0]
    feats = temporal_features(f, (6, 6))
    assert feats.shape == (4, 6, 6)
    assert np.all(feats[0] >= 0) and np.all(feats[0] <= 1) and np.all(feats[3] >= 0)
    assert not temporal_features(None, (6, 6)).any()


def test_rate_accounting_matches_payloads():
    frames = translating_square(4, **SMALL)
    p = PredictorConfig(keep=(0.4,))
    enc = encode_video(frames, VideoConfig(2, 1.0, p, p, p))
    h, _, secs = ct.read_container(enc.data)
    assert [s.section_bytes for s in enc.stats] == [len(s) for s in secs]
