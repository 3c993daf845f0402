import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cfnav.tracking.belief import BeliefError, Component, GmmBelief, decode, encode


def _cov(rng):
    a = rng.normal(size=(2, 2))
    b = rng.normal(size=(2, 2))
    c = np.zeros((4, 4))
    c[:2, :2] = a @ a.T + 0.01 * np.eye(2)
    c[2:, 2:] = b @ b.T + 0.01 * np.eye(2)
    return c


def make_belief(seed, k):
    rng = np.random.default_rng(seed)
    w = rng.random(k) + 0.01
    w /= w.sum()
    comps = [Component(int(i * 7 + 1), float(w[i]), rng.normal(size=4), _cov(rng)) for i in range(k)]
    return GmmBelief(int(rng.integers(0, 2**31)), float(rng.uniform(0, 1e4)), tuple(comps))


@given(st.integers(0, 10_000), st.integers(0, 12))
def test_roundtrip(seed, k):
    b = make_belief(seed, k)
    out = decode(encode(b))
    assert out.sensor == b.sensor and out.time == b.time and len(out) == k
    for x, y in zip(b.components, out.components):
        assert x.track_id == y.track_id and x.weight == y.weight
        np.testing.assert_array_equal(x.mean, y.mean)
        np.testing.assert_array_equal(x.covariance, y.covariance)
    assert encode(out) == encode(b)


def test_layout_is_little_endian_and_sized():
    b = make_belief(0, 2)
    buf = encode(b)
    (n,) = struct.unpack_from("<I", buf, 0)
    assert n == len(buf) - 4 == 4 + 8 + 2 + 2 * (4 + 8 + 32 + 48)
    sensor, t, count = struct.unpack_from("<IdH", buf, 4)
    assert (sensor, t, count) == (b.sensor, b.time, 2)


def test_decode_rejects_corruption():
    buf = encode(make_belief(1, 3))
    with pytest.raises(BeliefError):
        decode(buf[:-1])
    with pytest.raises(BeliefError):
        decode(b"\x00")
    bad = bytearray(buf)
    struct.pack_into("<H", bad, 4 + 12, 5)  # claim five components
    with pytest.raises(BeliefError):
        decode(bytes(bad))


@given(st.integers(0, 10_000), st.integers(1, 12))
def test_generated_beliefs_valid(seed, k):
    b = make_belief(seed, k)
    b.validate()
    assert abs(b.weights.sum() - 1) <= 1e-9


def test_validation_failures():
    good = make_belief(2, 2)
    c0, c1 = good.components
    with pytest.raises(BeliefError):
        GmmBelief(0, 0.0, (c0._replace(weight=0.9), c1)).validate()
    with pytest.raises(BeliefError):
        GmmBelief(0, 0.0, (c0, c1._replace(track_id=c0.track_id))).validate()
    neg = c1.covariance.copy()
    neg[0, 0] = -1.0
    assert not GmmBelief(0, 0.0, (c0, c1._replace(covariance=neg))).is_valid()
