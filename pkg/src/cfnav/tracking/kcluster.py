"""KClusterize: linear-time extraction of Gaussian-shaped particle clusters.

The number of clusters is an output. A gate pass seeds clusters, satellite
seeds are fused and borders re-swept, then every cluster is tested for
Gaussian shape along its principal axes and split until all pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import ndtri

from . import _pf_kernels as PK


class Cluster(NamedTuple):
    weight: float
    mean: np.ndarray  # (x, y, vx, vy)
    covariance: np.ndarray  # 4x4, block diagonal
    members: np.ndarray  # particle indices


@dataclass(frozen=True)
class KClusterConfig:
    gate: float = 0.4
    extent_k: float = 3.5
    kurtosis_band: float = 1.2
    min_split: int = 12
    min_weight: float = 0.02
    pos_reg: float = 1e-4
    vel_reg: float = 1e-3
    max_depth: int = 8


def _extent_limit(n, cfg):
    # the largest |z| of n Gaussian draws grows like sqrt(2 log n); keep the
    # family-wise false split rate near 1e-3 for large clusters
    return max(cfg.extent_k, float(ndtri(1.0 - 1e-3 / (4.0 * max(n, 1)))))


def _kurtosis_limits(n, cfg):
    # sample excess kurtosis has sd ~ sqrt(24/n) and a long right tail
    se = math.sqrt(24.0 / max(n, 1))
    return -max(cfg.kurtosis_band, 3.0 * se), max(cfg.kurtosis_band, 6.0 * se)


def _wstats(x, w):
    sw = w.sum()
    mu = (w[:, None] * x).sum(axis=0) / sw
    d = x - mu
    cov = (w[:, None] * d).T @ d / sw
    return mu, cov


def gaussian_check(pos, w, cfg: KClusterConfig = KClusterConfig()):
    """Shape test of one cluster.

    Returns ``(ok, reason, axis_proj)``; ``reason`` is ``"extent"`` or
    ``"kurtosis"`` on failure and ``axis_proj`` holds the standardised
    projections on the failing axis.
    """
    n = len(pos)
    if n < cfg.min_split:
        return True, None, None
    mu, cov = _wstats(pos, w)
    evals, evecs = np.linalg.eigh(cov)
    lim_e = _extent_limit(n, cfg)
    k_lo, k_hi = _kurtosis_limits(n, cfg)
    sw = w.sum()
    # major axis first
    for a in (1, 0):
        sd = math.sqrt(max(evals[a], 0.0))
        if sd < 1e-9:
            continue
        z = (pos - mu) @ evecs[:, a] / sd
        if np.abs(z).max() > lim_e:
            return False, "extent", z
        kurt = float((w * z**4).sum() / sw) - 3.0
        if not k_lo <= kurt <= k_hi:
            return False, "kurtosis", z
    return True, None, None


def _otsu_split(z, w):
    """Threshold on 1D projections maximising between-class variance."""
    order = np.argsort(z, kind="stable")
    zs, ws = z[order], w[order]
    cw = np.cumsum(ws)
    cz = np.cumsum(ws * zs)
    tot_w, tot_z = cw[-1], cz[-1]
    w0 = cw[:-1]
    w1 = tot_w - w0
    m0 = cz[:-1] / w0
    m1 = (tot_z - cz[:-1]) / np.where(w1 > 0, w1, 1.0)
    score = w0 * w1 * (m0 - m1) ** 2
    # keep both sides non-trivial
    lo = max(1, len(z) // 20)
    score[: lo - 1] = -1.0
    score[len(score) - lo + 1:] = -1.0
    i = int(np.argmax(score))
    return 0.5 * (zs[i] + zs[i + 1])


def _split(idx, pos, w, cfg, depth, out):
    ok, reason, z = gaussian_check(pos[idx], w[idx], cfg)
    if ok or depth >= cfg.max_depth:
        out.append(idx)
        return
    if reason == "extent":
        lim = _extent_limit(len(idx), cfg)
        inner = np.abs(z) <= lim
        if inner.all() or not inner.any():
            out.append(idx)
            return
        _split(idx[inner], pos, w, cfg, depth + 1, out)
        # peeled outliers are re-clustered among themselves
        rest = idx[~inner]
        labels, k = PK.gate_pass(pos[rest], w[rest], cfg.gate)
        for c in range(k):
            _split(rest[labels == c], pos, w, cfg, depth + 1, out)
        return
    t = _otsu_split(z, w[idx])
    left = z <= t
    if left.all() or not left.any():
        out.append(idx)
        return
    _split(idx[left], pos, w, cfg, depth + 1, out)
    _split(idx[~left], pos, w, cfg, depth + 1, out)


def _centres(pos, w, labels, k):
    cw = np.bincount(labels, weights=w, minlength=k) + 1e-300
    cx = np.bincount(labels, weights=w * pos[:, 0], minlength=k) / cw
    cy = np.bincount(labels, weights=w * pos[:, 1], minlength=k) / cw
    live = np.bincount(labels, minlength=k) > 0
    return np.column_stack([cx, cy])[live], cw[live]


def _fuse_close(centres, cw, gate):
    centres = centres.copy()
    cw = cw.copy()
    alive = np.ones(len(centres), dtype=bool)
    merged = True
    while merged:
        merged = False
        idx = np.flatnonzero(alive)
        for a_i, a in enumerate(idx):
            d = np.hypot(*(centres[idx[a_i + 1:]] - centres[a]).T)
            close = np.flatnonzero(d < gate)
            if len(close):
                b = idx[a_i + 1 + close[np.argmin(d[close])]]
                tw = cw[a] + cw[b]
                centres[a] = (cw[a] * centres[a] + cw[b] * centres[b]) / tw
                cw[a] = tw
                alive[b] = False
                merged = True
                break
    return centres[alive]


def _summarise(idx, pos, vel, w, cfg):
    ww = w[idx]
    mp, cp = _wstats(pos[idx], ww)
    mv, cv = _wstats(vel[idx], ww)
    cov = np.zeros((4, 4))
    cov[:2, :2] = cp + np.eye(2) * cfg.pos_reg
    cov[2:, 2:] = cv + np.eye(2) * cfg.vel_reg
    return np.concatenate([mp, mv]), cov


def kclusterize(pos, vel=None, weights=None, config: KClusterConfig = KClusterConfig(), backend=None):
    """Cluster weighted particles into Gaussian components.

    Returns a list of :class:`Cluster` sorted by descending weight with
    weights summing to one. Clusters lighter than ``min_weight`` are
    dropped (the heaviest is always kept) and their mass redistributed.
    """
    pos = np.asarray(pos, dtype=np.float64).reshape(-1, 2)
    n = len(pos)
    if n == 0:
        raise ValueError("kclusterize needs at least one particle")
    vel = np.zeros_like(pos) if vel is None else np.asarray(vel, dtype=np.float64).reshape(-1, 2)
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.sum() <= 0:
        w = np.full(n, 1.0 / n)

    labels, k = PK.gate_pass(pos, w, config.gate, backend)
    # An early seed off the true centre leaves a satellite cluster next to
    # the main one; fuse centres closer than the gate, then re-sweep.
    for _ in range(3):
        centres, cw = _centres(pos, w, labels, k)
        centres = _fuse_close(centres, cw, config.gate)
        d2 = ((pos[:, None, :] - centres[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        k = len(centres)
        if np.array_equal(new, labels):
            break
        labels = new
    groups = []
    for c in range(k):
        idx = np.flatnonzero(labels == c)
        if len(idx):
            _split(idx, pos, w, config, 0, groups)

    mass = np.array([w[g].sum() for g in groups])
    keep = mass >= config.min_weight * mass.sum()
    if not keep.any():
        keep[int(np.argmax(mass))] = True
    total = mass[keep].sum()
    out = []
    for g, m, kp in zip(groups, mass, keep):
        if not kp:
            continue
        mean, cov = _summarise(g, pos, vel, w, config)
        out.append(Cluster(float(m / total), mean, cov, g))
    out.sort(key=lambda c: (-c.weight, c.mean[0], c.mean[1]))
    return out
