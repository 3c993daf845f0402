import numpy as np
import pytest
from scipy.stats import binom

from cfnav.netsim import LinkModel, MessageBus
from cfnav.tracking.belief import Component, GmmBelief


def belief(sensor, t=0.0):
    return GmmBelief(sensor, t, (Component(sensor, 1.0, np.array([1.0, 2.0, 0.1, 0.0]), np.eye(4) * 0.01),))


def test_lossless_zero_latency_delivers_now():
    bus = MessageBus([0, 1, 2], LinkModel(), seed=0)
    sched = bus.broadcast(0, belief(0), 1.0)
    assert sched == [(1, 1.0), (2, 1.0)]
    for n in (1, 2):
        (got,) = bus.collect(n, 1.0, 0.1)
        assert got.sensor == 0
        np.testing.assert_array_equal(got.means, belief(0).means)
    assert bus.collect(0, 1.0, 0.1) == []


def test_drop_all():
    bus = MessageBus([0, 1], LinkModel(drop_prob=1.0), seed=0)
    for k in range(20):
        bus.broadcast(0, belief(0), 0.1 * k)
        assert bus.collect(1, 0.1 * k, 0.1) == []
    assert bus.stats["dropped"] == 20


def test_half_drop_within_binomial_interval():
    bus = MessageBus([0, 1, 2], LinkModel(drop_prob=0.5), seed=3)
    got = 0
    for k in range(1000):
        t = 0.1 * k
        bus.broadcast(0, belief(0), t)
        got += len(bus.collect(1, t, 0.1)) + len(bus.collect(2, t, 0.1))
    lo, hi = binom.interval(0.99, 2000, 0.5)
    assert lo <= got <= hi


def test_window_boundaries():
    bus = MessageBus([0, 1], LinkModel(latency=0.1), seed=0)
    bus.broadcast(0, belief(0), 0.0)
    assert bus.collect(1, 0.0999, 0.1) == []
    assert len(bus.collect(1, 0.1, 0.1)) == 1
    # a message landing just after ``now`` belongs to the next window
    bus = MessageBus([0, 1], LinkModel(latency=0.1 + 1e-6), seed=0)
    bus.broadcast(0, belief(0), 0.0)
    assert bus.collect(1, 0.1, 0.1) == []
    assert len(bus.collect(1, 0.2, 0.1)) == 1


def test_stale_messages_expire():
    bus = MessageBus([0, 1], LinkModel(latency=0.05), seed=0)
    bus.broadcast(0, belief(0), 0.0)
    assert bus.collect(1, 0.5, 0.1) == []
    assert bus.stats["expired"] == 1


def test_exactly_once():
    bus = MessageBus([0, 1], LinkModel(latency=0.02, jitter=0.05), seed=1)
    for k in range(50):
        bus.broadcast(0, belief(0, 0.1 * k), 0.1 * k)
    seen = []
    for k in range(60):
        seen += [b.time for b in bus.collect(1, 0.1 * k, 0.1)]
    assert len(seen) == len(set(seen)) == 50


def test_subset_of_peers_with_jitter():
    bus = MessageBus(range(5), LinkModel(latency=0.0, jitter=0.3), seed=2)
    sched = dict(bus.broadcast(0, belief(0), 0.0))
    first = {n for n in range(1, 5) if bus.collect(n, 0.1, 0.1)}
    assert first == {n for n, at in sched.items() if at <= 0.1}


def test_deterministic():
    def run():
        bus = MessageBus([0, 1, 2], LinkModel(0.01, 0.1, 0.3), seed=9)
        out = []
        for k in range(100):
            out.append(tuple(bus.broadcast(k % 3, belief(k % 3), 0.1 * k)))
        return out

    assert run() == run()


def test_dead_sender_and_revive():
    bus = MessageBus([0, 1], LinkModel(), seed=0)
    bus.kill(0, 1.0)
    bus.revive(0, 2.0)
    assert bus.broadcast(0, belief(0), 1.5) == []
    assert bus.diagnostics[-1]["kind"] == "dead_sender"
    assert bus.collect(1, 1.5, 0.1) == []
    assert len(bus.broadcast(0, belief(0), 2.0)) == 1
    assert len(bus.collect(1, 2.0, 0.1)) == 1


def test_dead_recipient_gets_nothing():
    bus = MessageBus([0, 1, 2], LinkModel(), seed=0)
    bus.kill(2, 0.0)
    assert [p for p, _ in bus.broadcast(0, belief(0), 0.5)] == [1]
    assert bus.collect(2, 0.5, 0.1) == []


def test_bad_link_parameters():
    with pytest.raises(ValueError):
        LinkModel(drop_prob=1.5)
    with pytest.raises(ValueError):
        LinkModel(latency=-1)
    with pytest.raises(ValueError):
        MessageBus([0, 1], LinkModel()).collect(0, 1.0, 0.0)
