"""Local particle filtering per sensor and asynchronous global fusion of beliefs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from . import _pf_kernels as PK
from .belief import BeliefError, Component, GmmBelief
from .kcluster import KClusterConfig, kclusterize
from .tracks import AssocConfig, Candidate, TrackSet, associate


class Measurement(NamedTuple):
    sensor: int
    time: float
    position: np.ndarray
    appearance: np.ndarray | None = None


@dataclass(frozen=True)
class TrackerConfig:
    n_local: int = 500
    n_global: int = 1000
    pos_noise: float = 0.05
    vel_noise: float = 0.2
    init_vel_sigma: float = 0.3
    meas_sigma: float = 0.1
    clutter_frac: float = 0.05
    inject_frac: float = 0.2
    support_gate: float = 0.5
    snap_to_detection: bool = False
    kcluster: KClusterConfig = field(default_factory=KClusterConfig)
    local_assoc: AssocConfig = field(default_factory=AssocConfig)
    global_assoc: AssocConfig = field(default_factory=lambda: AssocConfig(confirm_hits=2))
    backend: str | None = None


class ParticleSet:
    """Mutable particle cloud owned by one sensor node."""

    def __init__(self, pos=None, vel=None, weights=None):
        self.pos = np.zeros((0, 2)) if pos is None else np.asarray(pos, dtype=np.float64).reshape(-1, 2)
        self.vel = np.zeros_like(self.pos) if vel is None else np.asarray(vel, dtype=np.float64).reshape(-1, 2)
        n = len(self.pos)
        self.weights = np.full(n, 1.0 / max(n, 1)) if weights is None else np.asarray(weights, dtype=np.float64)

    def __len__(self):
        return len(self.pos)


def _meas_arrays(z):
    if not z:
        return np.zeros((0, 2)), []
    return np.array([m.position for m in z], dtype=np.float64).reshape(-1, 2), [m.appearance for m in z]


def _init_particles(ps: ParticleSet, meas, n, rng, cfg):
    src = np.arange(n) % len(meas)
    ps.pos = meas[src] + rng.normal(0.0, cfg.meas_sigma, (n, 2))
    ps.vel = rng.normal(0.0, cfg.init_vel_sigma, (n, 2))
    ps.weights = np.full(n, 1.0 / n)


def _inject(ps: ParticleSet, meas, rng, cfg):
    n = len(ps)
    k = int(cfg.inject_frac * n)
    if k == 0:
        return
    idx = rng.choice(n, size=k, replace=False)
    keep = np.ones(n, dtype=bool)
    keep[idx] = False
    src = rng.integers(0, len(meas), size=k)
    new_pos = meas[src] + rng.normal(0.0, cfg.meas_sigma, (k, 2))
    # borrow motion from the closest surviving particle when one is near
    new_vel = rng.normal(0.0, cfg.init_vel_sigma, (k, 2))
    if keep.any():
        kp, kv = ps.pos[keep], ps.vel[keep]
        d2 = ((new_pos[:, None, :] - kp[None, :, :]) ** 2).sum(axis=2)
        near = np.argmin(d2, axis=1)
        close = d2[np.arange(k), near] <= cfg.support_gate**2
        new_vel[close] = kv[near[close]] + rng.normal(0.0, cfg.vel_noise, (int(close.sum()), 2))
    ps.pos[idx] = new_pos
    ps.vel[idx] = new_vel


def _supported_candidates(clusters, meas, apps, cfg):
    """Clusters with a detection inside ``support_gate``; unsupported ones carry no news."""
    cands = []
    for c in clusters:
        if len(meas) == 0:
            break
        d = np.hypot(meas[:, 0] - c.mean[0], meas[:, 1] - c.mean[1])
        j = int(np.argmin(d))
        if d[j] > cfg.support_gate:
            continue
        mean = c.mean.copy()
        if cfg.snap_to_detection:
            mean[:2] = meas[j]
        cands.append(Candidate(c.weight, mean, c.covariance, apps[j]))
    return cands


def _belief_from(sensor, now, cands, labels, tracks: TrackSet, confirmed_only=True):
    confirmed = {t.id for t in tracks.tracks if t.confirmed}
    rows = [(lab, c) for lab, c in zip(labels, cands) if lab is not None and (not confirmed_only or lab in confirmed)]
    if not rows:
        return GmmBelief(sensor, now, ())
    w = np.array([c.weight for _, c in rows])
    w = w / w.sum()
    comps = tuple(Component(int(lab), float(wi), np.asarray(c.mean), np.asarray(c.covariance)) for (lab, c), wi in zip(rows, w))
    return GmmBelief(sensor, now, comps)


def local_estimate(
    particles: ParticleSet,
    z: Sequence[Measurement],
    prev_tracks: TrackSet,
    dt: float,
    now: float,
    rng: np.random.Generator,
    sensor: int = 0,
    config: TrackerConfig = TrackerConfig(),
    diagnostics: list | None = None,
):
    """One local SIR update of ``particles`` (in place) from this sensor's detections.

    Returns ``(belief, tracks)``. The belief holds one component per confirmed
    local track that was supported by a detection this frame.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    for m in z:
        if m.sensor != sensor:
            raise ValueError(f"measurement from sensor {m.sensor} given to sensor {sensor}")
    cfg = config
    diags = diagnostics if diagnostics is not None else []
    meas, apps = _meas_arrays(z)

    if len(particles) == 0:
        if len(meas) == 0:
            tracks, _ = associate([], prev_tracks, now, cfg.local_assoc)
            return GmmBelief(sensor, now, ()), tracks
        _init_particles(particles, meas, cfg.n_local, rng, cfg)
        diags.append({"kind": "reinitialised", "sensor": sensor})
    else:
        n = len(particles)
        particles.pos = particles.pos + particles.vel * dt + rng.normal(0.0, cfg.pos_noise, (n, 2))
        particles.vel = particles.vel + rng.normal(0.0, cfg.vel_noise, (n, 2))

    if len(meas):
        _inject(particles, meas, rng, cfg)
        w = PK.detection_weights(
            particles.pos, meas, cfg.meas_sigma, cfg.clutter_frac, np.ones(len(particles)), cfg.backend
        )
        total = w.sum()
        if not total > 0:
            diags.append({"kind": "zero_weight", "sensor": sensor})
        else:
            idx = PK.systematic_resample(w / total, rng.random(), cfg.backend)
            particles.pos = particles.pos[idx]
            particles.vel = particles.vel[idx]
        particles.weights = np.full(len(particles), 1.0 / len(particles))

    clusters = kclusterize(particles.pos, particles.vel, particles.weights, cfg.kcluster, cfg.backend)
    cands = _supported_candidates(clusters, meas, apps, cfg)
    tracks, labels = associate(cands, prev_tracks, now, cfg.local_assoc)
    return _belief_from(sensor, now, cands, labels, tracks), tracks


# -- global phase -------------------------------------------------------------

def _comp_logpdf(x, comp):
    """log N(x; mean, cov) for rows of ``x`` (n, 4)."""
    mu = np.asarray(comp.mean)
    cov = np.asarray(comp.covariance)
    L = np.linalg.cholesky(cov)
    d = np.linalg.solve(L, (x - mu).T)
    maha = (d * d).sum(axis=0)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    return -0.5 * (maha + logdet + 4.0 * np.log(2.0 * np.pi))


def sensor_loglik(x, components):
    """log of sum_k lambda_k N(x; mu_k, sigma_k) over one sensor's components."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    comps = list(components)
    w = np.array([c.weight for c in comps])
    w = w / w.sum()
    terms = np.stack([np.log(wk) + _comp_logpdf(x, c) for wk, c in zip(w, comps)])
    return logsumexp(terms, axis=0)


def fusion_likelihood(x, per_sensor):
    """Joint likelihood of states ``x`` under independent sensor beliefs.

    ``per_sensor`` is a list of component lists, one per sensor; the result
    is the product of the per-sensor mixture densities.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if not per_sensor:
        return np.ones(len(x))
    return np.exp(sum(sensor_loglik(x, comps) for comps in per_sensor))


def _sample_mixture(beliefs, n, rng):
    """Equal share per belief, components by weight. Returns (x, belief_idx, comp_idx)."""
    shares = np.full(len(beliefs), n // len(beliefs))
    shares[: n - shares.sum()] += 1
    xs, bi, ci = [], [], []
    for b, (belief, m) in enumerate(zip(beliefs, shares)):
        w = belief.weights / belief.weights.sum()
        counts = rng.multinomial(m, w)
        for k, (comp, c) in enumerate(zip(belief.components, counts)):
            if c == 0:
                continue
            xs.append(rng.multivariate_normal(comp.mean, comp.covariance, size=c, method="cholesky"))
            bi.append(np.full(c, b))
            ci.append(np.full(c, k))
    return np.concatenate(xs), np.concatenate(bi), np.concatenate(ci)


def _attach_appearance(cands, source: TrackSet | None, gate):
    if source is None:
        return cands
    src = [t for t in source.tracks if t.appearance is not None and not t.is_group]
    if not src:
        return cands
    pos = np.array([t.state[:2] for t in src])
    out = []
    for c in cands:
        d = np.hypot(pos[:, 0] - c.mean[0], pos[:, 1] - c.mean[1])
        j = int(np.argmin(d))
        out.append(c._replace(appearance=src[j].appearance) if d[j] <= gate else c)
    return out


def global_estimate(
    received: Sequence[GmmBelief],
    own: GmmBelief,
    prev_global: TrackSet,
    delta_t: float,
    now: float,
    rng: np.random.Generator,
    config: TrackerConfig = TrackerConfig(),
    appearance_source: TrackSet | None = None,
    diagnostics: list | None = None,
):
    """Fuse ``own`` with peer beliefs that arrived inside the window.

    Particles are drawn from the pooled mixture, re-clustered, then weighted
    inside each pool cluster by the product of the contributing sensors'
    densities over the pooled proposal and resampled. Without usable peer
    beliefs the own components are passed through unchanged.
    Returns ``(tracks, fused_belief)``.
    """
    if not delta_t > 0:
        raise ValueError("delta_t must be > 0")
    cfg = config
    diags = diagnostics if diagnostics is not None else []
    usable = [own] if len(own) else []
    for b in received:
        if b.sensor == own.sensor:
            continue
        try:
            b.validate()
        except BeliefError as exc:
            diags.append({"kind": "malformed_belief", "sensor": b.sensor, "error": str(exc)})
            continue
        if len(b):
            usable.append(b)

    if not usable:
        cands = []
    elif len(usable) == 1:
        cands = [Candidate(c.weight, np.asarray(c.mean), np.asarray(c.covariance)) for c in usable[0].components]
    else:
        cands = _fuse(usable, rng, cfg)
    cands = _attach_appearance(cands, appearance_source, cfg.support_gate)
    tracks, labels = associate(cands, prev_global, now, cfg.global_assoc)
    return tracks, _belief_from(own.sensor, now, cands, labels, tracks, confirmed_only=False)


def _fuse(beliefs, rng, cfg):
    x, bi, ci = _sample_mixture(beliefs, cfg.n_global, rng)
    n = len(x)
    pool = kclusterize(x[:, :2], x[:, 2:], np.full(n, 1.0 / n), cfg.kcluster, cfg.backend)
    # proposal density of the pooled draw
    share = np.bincount(bi, minlength=len(beliefs)) / n
    logq = logsumexp(
        np.stack([np.log(share[b]) + sensor_loglik(x, bel.components) for b, bel in enumerate(beliefs)]), axis=0
    )
    cands = []
    for cl in pool:
        m = cl.members
        xs = x[m]
        logw = -logq[m]
        for b, bel in enumerate(beliefs):
            ks, cnt = np.unique(ci[m][bi[m] == b], return_counts=True)
            total = np.bincount(ci[bi == b], minlength=len(bel))
            ks = [k for k, c in zip(ks, cnt) if c >= 0.1 * total[k]]
            if ks:
                logw = logw + sensor_loglik(xs, [bel.components[k] for k in ks])
        w = np.exp(logw - logw.max())
        w /= w.sum()
        idx = PK.systematic_resample(w, rng.random(), cfg.backend)
        xr = xs[idx]
        mean = xr.mean(axis=0)
        cov = np.zeros((4, 4))
        cov[:2, :2] = np.cov(xr[:, :2].T, bias=True) + np.eye(2) * cfg.kcluster.pos_reg
        cov[2:, 2:] = np.cov(xr[:, 2:].T, bias=True) + np.eye(2) * cfg.kcluster.vel_reg
        cands.append(Candidate(cl.weight, mean, cov))
    return cands
