"""Track bookkeeping and data association with group merge/split."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment

_BIG = 1e6


class Candidate(NamedTuple):
    weight: float
    mean: np.ndarray  # (x, y, vx, vy)
    covariance: np.ndarray
    appearance: np.ndarray | None = None


class Member(NamedTuple):
    id: int
    appearance: np.ndarray | None


@dataclass(frozen=True, eq=False)
class Track:
    id: int
    state: np.ndarray  # (x, y, vx, vy) at ``time``
    covariance: np.ndarray
    time: float
    last_seen: float
    hits: int = 1
    confirmed: bool = False
    appearance: np.ndarray | None = None
    members: tuple = ()  # empty for a solo track, >= 2 Members for a group

    @property
    def is_group(self) -> bool:
        return len(self.members) >= 2

    @property
    def position(self):
        return self.state[:2]

    def predict(self, now: float) -> np.ndarray:
        s = self.state.copy()
        s[:2] += s[2:] * (now - self.time)
        return s

    def as_members(self):
        return self.members if self.is_group else (Member(self.id, self.appearance),)


@dataclass(frozen=True, eq=False)
class TrackSet:
    tracks: tuple = ()
    next_id: int = 0
    time: float = 0.0

    def __len__(self):
        return len(self.tracks)

    def get(self, track_id):
        for t in self.tracks:
            if t.id == track_id:
                return t
        raise KeyError(track_id)

    def reported(self, confirmed_only: bool = True):
        """``{id: (x, y, vx, vy)}`` of reportable tracks; group members share the group state."""
        out = {}
        for t in self.tracks:
            if confirmed_only and not t.confirmed:
                continue
            for m in t.as_members():
                out[m.id] = t.state
        return out


@dataclass(frozen=True)
class AssocConfig:
    gate: float = 1.0
    w_pos: float = 0.6
    w_speed: float = 0.25
    w_heading: float = 0.15
    heading_min_speed: float = 0.2
    timeout: float = 1.0
    confirm_hits: int = 3
    merge_dist: float = 0.6
    appearance_alpha: float = 0.2
    velocity_smoothing: float = 0.0
    birth_exclusion: float = 0.4


def as_candidate(c) -> Candidate:
    if isinstance(c, Candidate):
        return c
    if hasattr(c, "track_id"):  # belief component
        return Candidate(float(c.weight), np.asarray(c.mean, dtype=np.float64), np.asarray(c.covariance))
    c = tuple(c)
    app = c[3] if len(c) > 3 else None
    mean = np.zeros(4)
    m = np.asarray(c[1], dtype=np.float64).reshape(-1)
    mean[: len(m)] = m
    cov = np.asarray(c[2], dtype=np.float64)
    if cov.shape == (2, 2):
        full = np.eye(4) * 1e-3
        full[:2, :2] = cov
        cov = full
    return Candidate(float(c[0]), mean, cov, None if app is None else np.asarray(app, dtype=np.float64))


def association_cost(pred, cand, cfg: AssocConfig = AssocConfig()) -> float:
    """Weighted position / speed / heading cost, ``inf`` outside the gate."""
    d = math.hypot(pred[0] - cand[0], pred[1] - cand[1])
    if d > cfg.gate:
        return math.inf
    s1 = math.hypot(pred[2], pred[3])
    s2 = math.hypot(cand[2], cand[3])
    dh = 0.0
    if s1 > cfg.heading_min_speed and s2 > cfg.heading_min_speed:
        a = math.atan2(pred[3], pred[2]) - math.atan2(cand[3], cand[2])
        dh = abs((a + math.pi) % (2.0 * math.pi) - math.pi) / math.pi
    return cfg.w_pos * d + cfg.w_speed * abs(s1 - s2) + cfg.w_heading * dh


def _blend_app(old, new, alpha):
    if new is None:
        return old
    if old is None:
        return np.asarray(new, dtype=np.float64)
    return (1.0 - alpha) * old + alpha * np.asarray(new, dtype=np.float64)


def _app_dist(a, b):
    if a is None or b is None:
        return 0.0
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))


def associate(candidates, prev: TrackSet, now: float, config: AssocConfig = AssocConfig()):
    """Data association returning ``(tracks, labels)``.

    ``labels[j]`` is the track id that candidate ``j`` ended up on.
    """
    cands = [as_candidate(c) for c in candidates]
    cfg = config
    next_id = prev.next_id
    tracks = list(prev.tracks)
    preds = [t.predict(now) for t in tracks]

    nt, nc = len(tracks), len(cands)
    cost = np.full((nt, nc), _BIG)
    for i in range(nt):
        for j in range(nc):
            c = association_cost(preds[i], cands[j].mean, cfg)
            if c < math.inf:
                cost[i, j] = c
    match_t, match_c = {}, {}
    if nt and nc:
        rows, cols = linear_sum_assignment(cost)
        for i, j in zip(rows, cols):
            if cost[i, j] < _BIG:
                match_t[i] = j
                match_c[j] = i

    out = {}  # candidate index -> Track
    labels = [None] * nc

    def updated(t, cand, members=None):
        state = np.asarray(cand.mean, dtype=np.float64).copy()
        dt = now - t.time
        if cfg.velocity_smoothing > 0.0 and dt > 0:
            fd = (state[:2] - t.state[:2]) / dt
            a = cfg.velocity_smoothing
            state[2:] = (1.0 - a) * state[2:] + a * fd
        hits = t.hits + 1
        return replace(
            t,
            state=state,
            covariance=np.asarray(cand.covariance),
            time=now,
            last_seen=now,
            hits=hits,
            confirmed=t.confirmed or hits >= cfg.confirm_hits,
            appearance=_blend_app(t.appearance, cand.appearance, cfg.appearance_alpha) if not t.is_group else t.appearance,
            members=t.members if members is None else members,
        )

    for i, j in match_t.items():
        out[j] = updated(tracks[i], cands[j])

    # tracks collapsing onto one candidate become a group
    absorbed = set()
    for i in range(nt):
        t = tracks[i]
        if i in match_t or not t.confirmed:
            continue
        best, bd = None, cfg.merge_dist
        for j, k in match_c.items():
            if not tracks[k].confirmed or k in absorbed:
                continue
            d = math.hypot(preds[i][0] - cands[j].mean[0], preds[i][1] - cands[j].mean[1])
            if d <= bd:
                best, bd = j, d
        if best is None:
            continue
        host = out[best]
        members = host.as_members() + t.as_members()
        out[best] = replace(host, id=next_id, members=members, appearance=None, confirmed=True)
        next_id += 1
        absorbed.add(i)

    # groups with a free candidate nearby separate again
    free = [j for j in range(nc) if j not in match_c]
    for j in list(out):
        g = out[j]
        if not g.is_group:
            continue
        near = [
            f for f in free
            if math.hypot(cands[f].mean[0] - g.state[0], cands[f].mean[1] - g.state[1]) <= cfg.gate
        ]
        if not near:
            continue
        near.sort(key=lambda f: math.hypot(cands[f].mean[0] - g.state[0], cands[f].mean[1] - g.state[1]))
        parts = [j] + near[: len(g.members) - 1]
        members = list(g.members)
        c_app = np.array([[_app_dist(m.appearance, cands[p].appearance) for p in parts] for m in members])
        mi, pi = linear_sum_assignment(c_app)
        given = {parts[p]: [members[m]] for m, p in zip(mi, pi)}
        for m in set(range(len(members))) - set(mi):
            p = parts[int(np.argmin(c_app[m]))]
            given[p].append(members[m])
        for p, ms in given.items():
            cand = cands[p]
            if len(ms) == 1:
                resumed = Track(
                    ms[0].id, np.asarray(cand.mean, dtype=np.float64).copy(), np.asarray(cand.covariance),
                    now, now, cfg.confirm_hits, True,
                    _blend_app(ms[0].appearance, cand.appearance, cfg.appearance_alpha),
                )
            else:
                resumed = Track(
                    next_id, np.asarray(cand.mean, dtype=np.float64).copy(), np.asarray(cand.covariance),
                    now, now, cfg.confirm_hits, True, None, tuple(ms),
                )
                next_id += 1
            out[p] = resumed
            if p in free:
                free.remove(p)

    # births; a fragment next to a live track is not a new object
    for j in free:
        c = cands[j]
        if any(
            math.hypot(c.mean[0] - t.state[0], c.mean[1] - t.state[1]) < cfg.birth_exclusion for t in out.values()
        ):
            continue
        state = np.asarray(c.mean, dtype=np.float64).copy()
        if cfg.velocity_smoothing >= 1.0:
            # pure finite differencing has nothing to difference against yet
            state[2:] = 0.0
        out[j] = Track(
            next_id, state, np.asarray(c.covariance),
            now, now, 1, cfg.confirm_hits <= 1, None if c.appearance is None else np.asarray(c.appearance),
        )
        next_id += 1

    result = [out[j] for j in sorted(out)]
    for j in sorted(out):
        labels[j] = out[j].id

    # coast or retire the rest
    for i, t in enumerate(tracks):
        if i in match_t or i in absorbed or not t.confirmed:
            continue
        if now - t.last_seen <= cfg.timeout + 1e-9:
            result.append(replace(t, state=preds[i], time=now))

    result.sort(key=lambda t: t.id)
    return TrackSet(tuple(result), next_id, now), labels


def data_associate(candidates, prev: TrackSet, now: float, config: AssocConfig = AssocConfig()) -> TrackSet:
    """Assign candidate components to persistent track ids."""
    return associate(candidates, prev, now, config)[0]
