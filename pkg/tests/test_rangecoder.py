import numpy as np
import pytest
from scipy.special import ndtr
from hypothesis import given
import hypothesis.strategies as st

from layercodec import rangecoder as rc
from layercodec.entropy import SCALE_TABLE, likelihood
from layercodec.errors import DecodingError, EncodingError


def test_table_invariants():
    for si in range(0, 64, 3):
        for ph in range(4):
            t = rc.build_cdf(si, ph)
            assert t.cum[0] == 0 and t.cum[-1] == rc.TOTAL
            assert min(t.freqs) >= 1
            assert all(b > a for a, b in zip(t.cum, t.cum[1:]))
            assert len(t.freqs) == 256


def test_narrow_table_concentrates_on_zero():
    t = rc.build_cdf(0)
    assert t.freqs[127] >= rc.TOTAL - 300


def test_wide_table_is_near_uniform():
    t = rc.build_cdf(63)
    f = np.array(t.freqs[:255], dtype=float)
    assert f.max() / f.min() < 1.2


@pytest.mark.parametrize("si", [0, 10, 30, 50, 63])
def test_table_tracks_likelihood(si):
    # frequencies are the floored likelihoods renormalised, to within one count
    t = rc.build_cdf(si)
    s = SCALE_TABLE[si]
    p = likelihood(np.arange(-127, 128), 0.0, s)
    tail = max(ndtr(-127.5 / s) * 2, 2.0 ** -16)
    q = p / (p.sum() + tail)
    f = np.array(t.freqs[:255]) / rc.TOTAL
    assert np.max(np.abs(f - q)) <= 1.0 / rc.TOTAL + 1e-12


def test_phase_tables_are_shifted():
    a, b = rc.build_cdf(20, 0), rc.build_cdf(20, 2)
    # mean .5 is symmetric about residuals 0 and 1
    assert b.freqs[127] == b.freqs[128]
    assert a.freqs[126] == a.freqs[128]


def test_empty_sequence():
    payload = rc.encode([], [])
    assert len(payload) == 2
    assert rc.decode(payload, 0, []) == []


def test_single_symbol():
    t = rc.build_cdf(10)
    assert rc.decode(rc.encode([3], [t]), 1, [t]) == [3]


@given(st.lists(st.tuples(st.integers(-256, 255), st.integers(0, 63), st.integers(0, 3)),
                max_size=200))
def test_round_trip_property(items):
    syms = [s for s, _, _ in items]
    tables = [rc.build_cdf(si, ph) for _, si, ph in items]
    payload = rc.encode(syms, tables)
    assert rc.decode(payload, len(syms), tables) == syms


def test_round_trip_thousand_trials():
    r = np.random.default_rng(7)
    for _ in range(1000):
        n = int(r.integers(0, 40))
        si = r.integers(0, 64, n)
        ph = r.integers(0, 4, n)
        syms = np.clip(np.round(r.normal(0, SCALE_TABLE[si])), -256, 255).astype(int).tolist()
        tables = [rc.build_cdf(int(a), int(b)) for a, b in zip(si, ph)]
        assert rc.decode(rc.encode(syms, tables), n, tables) == syms


def test_out_of_alphabet_symbol():
    t = rc.build_cdf(5)
    with pytest.raises(EncodingError):
        rc.encode([256], [t])
    with pytest.raises(EncodingError):
        rc.encode([-257], [t])


def test_iid_payload_near_entropy():
    si = int(np.argmin(np.abs(SCALE_TABLE - 2.0)))
    t = rc.build_cdf(si)
    r = np.random.default_rng(3)
    p = np.array(t.freqs) / rc.TOTAL
    idx = r.choice(len(p), size=10_000, p=p)
    syms = [int(i) - 127 if i < 255 else 200 for i in idx]
    payload = rc.encode(syms, [t] * len(syms))
    # escape symbols also spend 9 raw bits
    raw = 9 * sum(1 for i in idx if i == 255)
    h = t.entropy_bits() * len(syms) + raw
    assert 8 * len(payload) <= 1.01 * h + 64
    assert rc.decode(payload, len(syms), [t] * len(syms)) == syms


def test_truncated_payload_detected():
    t = rc.build_cdf(40)
    syms = list(range(-60, 60))
    payload = rc.encode(syms, [t] * len(syms))
    with pytest.raises(DecodingError):
        rc.decode(payload[:-3], len(syms), [t] * len(syms))


def test_trailing_garbage_detected():
    t = rc.build_cdf(40)
    payload = rc.encode([1, 2, 3], [t] * 3)
    with pytest.raises(DecodingError):
        rc.decode(payload + b"\x00", 3, [t] * 3)


def test_encoding_is_reproducible():
    r = np.random.default_rng(11)
    vals = r.integers(-20, 21, 300)
    mu = r.integers(-40, 40, 300) * 0.25
    si = r.integers(10, 40, 300)
    a = rc.encode_values(vals, mu, si)
    assert a == rc.encode_values(vals, mu, si)
    assert np.array_equal(rc.decode_values(a, mu, si), vals)


def test_carry_propagation_stress():
    # long runs of the most probable symbol in a very skewed table produce 0xFF runs
    t = rc.build_cdf(0)
    syms = [0] * 5000 + [5] + [0] * 5000 + [-127, 127] * 3
    payload = rc.encode(syms, [t] * len(syms))
    assert rc.decode(payload, len(syms), [t] * len(syms)) == syms
