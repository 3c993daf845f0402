"""Synthetic ground-plane sensors with field-of-view masks, noise and clutter."""

from __future__ import annotations

import numpy as np

from ..tracking.filter import Measurement


def in_polygon(points, poly) -> np.ndarray:
    """Even-odd rule point-in-polygon test for rows of ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    poly = np.asarray(poly, dtype=np.float64)
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    x1, y1 = poly[:, 0][None, :], poly[:, 1][None, :]
    x2, y2 = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    crosses = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    return (crosses & (x < xi)).sum(axis=1) % 2 == 1


def polygon_area(poly) -> float:
    p = np.asarray(poly, dtype=np.float64)
    return 0.5 * abs(np.dot(p[:, 0], np.roll(p[:, 1], -1)) - np.dot(p[:, 1], np.roll(p[:, 0], -1)))


def _uniform_in_polygon(poly, n, rng):
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    out = np.zeros((0, 2))
    while len(out) < n:
        cand = rng.uniform(lo, hi, size=(max(2 * (n - len(out)), 8), 2))
        out = np.vstack([out, cand[in_polygon(cand, poly)]])
    return out[:n]


def simulate_sensors(world, sensors, rng: np.random.Generator, appearances=None, occluded=frozenset()):
    """Detections of every sensor for one world snapshot.

    ``appearances`` maps agent id to its signature; ``occluded`` holds
    ``(sensor_id, agent_id)`` pairs that produce no detection this frame.
    Returns ``{sensor_id: [Measurement, ...]}``; clutter detections carry
    a random signature.
    """
    appearances = appearances or {}
    out = {}
    agents = list(world.agents)
    pos = np.array([a.position for a in agents]).reshape(-1, 2)
    dim = next((len(v) for v in appearances.values() if v is not None), 0)
    for s in sensors:
        z = []
        inside = in_polygon(pos, s.fov) if len(agents) else np.zeros(0, dtype=bool)
        # fixed number of draws per agent keeps the random stream aligned
        u = rng.random(len(agents))
        noise = rng.normal(0.0, 1.0, (len(agents), 2))
        for k, a in enumerate(agents):
            if not inside[k] or (s.id, a.id) in occluded or u[k] >= s.detection_rate:
                continue
            app = appearances.get(a.id)
            if app is not None:
                app = app + rng.normal(0.0, s.appearance_noise, len(app))
            z.append(Measurement(s.id, world.time, a.position + s.noise * noise[k], app))
        n_fp = rng.poisson(s.false_positive_rate) if s.false_positive_rate > 0 else 0
        if n_fp:
            for p in _uniform_in_polygon(s.fov, n_fp, rng):
                app = rng.uniform(0.0, 1.0, dim) if dim else None
                z.append(Measurement(s.id, world.time, p, app))
        out[s.id] = z
    return out
