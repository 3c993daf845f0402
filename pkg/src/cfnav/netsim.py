"""Virtual-time message bus between tracker nodes.

Each broadcast is encoded on the wire, dropped or scheduled per peer with
latency ``fixed + U(0, jitter)``, and handed out by :meth:`MessageBus.collect`
exactly once, in the first window ``(now - delta_t, now]`` that contains its
delivery time.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .tracking.belief import GmmBelief, decode, encode


@dataclass(frozen=True)
class LinkModel:
    latency: float = 0.0
    jitter: float = 0.0
    drop_prob: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must lie in [0, 1]")
        if self.latency < 0 or self.jitter < 0:
            raise ValueError("latency and jitter must be >= 0")


@dataclass(order=True)
class _Pending:
    deliver_at: float
    seq: int
    recipient: int = field(compare=False)
    sender: int = field(compare=False)
    payload: bytes = field(compare=False)


class MessageBus:
    def __init__(self, nodes, link: LinkModel = LinkModel(), seed=0):
        self.nodes = sorted(int(n) for n in nodes)
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("node ids must be unique")
        self.link = link
        self.rng = np.random.default_rng(seed)
        self._queue: dict[int, list] = {n: [] for n in self.nodes}
        self._seq = 0
        # node -> sorted list of (time, alive)
        self._events: dict[int, list] = {n: [] for n in self.nodes}
        self.diagnostics: list = []
        self.stats = {"sent": 0, "dropped": 0, "delivered": 0, "expired": 0}

    # -- liveness -------------------------------------------------------

    def kill(self, node: int, at: float):
        self._events[node].append((float(at), False))
        self._events[node].sort(key=lambda e: e[0])

    def revive(self, node: int, at: float):
        self._events[node].append((float(at), True))
        self._events[node].sort(key=lambda e: e[0])

    def alive(self, node: int, now: float) -> bool:
        state = True
        for t, a in self._events[node]:
            if t <= now:
                state = a
        return state

    # -- messaging ------------------------------------------------------

    def broadcast(self, sender: int, belief: GmmBelief, now: float):
        """Schedule ``belief`` to every live peer. Returns ``[(peer, deliver_at)]``."""
        if sender not in self._queue:
            raise KeyError(f"unknown node {sender}")
        if not self.alive(sender, now):
            self.diagnostics.append({"kind": "dead_sender", "node": sender, "time": now})
            return []
        payload = encode(belief)
        schedule = []
        for peer in self.nodes:
            if peer == sender or not self.alive(peer, now):
                continue
            self.stats["sent"] += 1
            # draw both numbers every time so the stream does not depend on outcomes
            u_drop, u_lat = self.rng.random(2)
            if u_drop < self.link.drop_prob:
                self.stats["dropped"] += 1
                continue
            at = now + self.link.latency + self.link.jitter * u_lat
            heapq.heappush(self._queue[peer], _Pending(at, self._seq, peer, sender, payload))
            self._seq += 1
            schedule.append((peer, at))
        return schedule

    def collect(self, node: int, now: float, delta_t: float):
        """Beliefs delivered to ``node`` in ``(now - delta_t, now]``; older ones are discarded."""
        if not delta_t > 0:
            raise ValueError("delta_t must be > 0")
        q = self._queue[node]
        out = []
        lo = now - delta_t
        while q and q[0].deliver_at <= now + 1e-12:
            msg = heapq.heappop(q)
            if msg.deliver_at <= lo + 1e-12:
                self.stats["expired"] += 1
                continue
            out.append(decode(msg.payload))
            self.stats["delivered"] += 1
        if not self.alive(node, now):
            # a dead node consumes nothing
            self.stats["expired"] += len(out)
            return []
        return out

    def pending(self, node: int) -> int:
        return len(self._queue[node])
