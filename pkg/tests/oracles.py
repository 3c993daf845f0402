"""Independent reference computations used by the tests.

Nothing here imports the package's kernels; geometry is rebuilt from
first principles so that agreement is meaningful.
"""
import math

import numpy as np


def _line_intersection(p0, d0, p1, d1):
    """Point on both lines p0 + s*d0 and p1 + t*d1."""
    A = np.array([[d0[0], -d1[0]], [d0[1], -d1[1]]], dtype=float)
    s, _ = np.linalg.solve(A, np.asarray(p1, float) - np.asarray(p0, float))
    return np.asarray(p0, float) + s * np.asarray(d0, float)


def hrvo_oracle(pa, va, ra, pb, vb, rb):
    """HRVO of A induced by B as (apex, left, right).

    VO: apex vb, legs tangent to the disc of radius ra+rb around pb-pa.
    RVO: same legs, apex (va+vb)/2. The hybrid apex sits where the RVO leg
    on the side of the relative velocity meets the opposite VO leg.
    """
    pa, va, pb, vb = (np.asarray(x, float) for x in (pa, va, pb, vb))
    rel = pb - pa
    dist = math.hypot(*rel)
    half = math.asin((ra + rb) / dist)
    c = math.atan2(rel[1], rel[0])
    left = np.array([math.cos(c + half), math.sin(c + half)])
    right = np.array([math.cos(c - half), math.sin(c - half)])
    rvo_apex = 0.5 * (va + vb)
    vrel = va - vb
    if rel[0] * vrel[1] - rel[1] * vrel[0] > 0:  # relative velocity left of the centre line
        apex = _line_intersection(rvo_apex, left, vb, right)
    else:
        apex = _line_intersection(rvo_apex, right, vb, left)
    return apex, left, right


def in_cone(v, apex, left, right, tol=1e-9):
    w = np.asarray(v, float) - apex
    return (right[0] * w[1] - right[1] * w[0] > tol) and (w[0] * left[1] - w[1] * left[0] > tol)


def reachable_samples(cur, max_dv, max_speed, n, rng):
    """``n`` uniform samples of the accel disc around ``cur`` clipped to the speed disc."""
    out = []
    cur = np.asarray(cur, float)
    while sum(len(o) for o in out) < n:
        r = max_dv * np.sqrt(rng.random(4 * n))
        th = rng.uniform(0, 2 * np.pi, 4 * n)
        s = cur + np.column_stack([r * np.cos(th), r * np.sin(th)])
        out.append(s[np.hypot(s[:, 0], s[:, 1]) <= max_speed])
    return np.concatenate(out)[:n]


def brute_force_best(pref, cur, max_dv, max_speed, cones, n=10_000, seed=0):
    """Smallest distance to ``pref`` among sampled reachable velocities outside every cone."""
    rng = np.random.default_rng(seed)
    s = reachable_samples(cur, max_dv, max_speed, n, rng)
    ok = np.ones(len(s), dtype=bool)
    for apex, left, right in cones:
        w = s - apex
        inside = (right[0] * w[:, 1] - right[1] * w[:, 0] > 0) & (w[:, 0] * left[1] - w[:, 1] * left[0] > 0)
        ok &= ~inside
    if not ok.any():
        return math.inf
    return float(np.min(np.hypot(s[ok, 0] - pref[0], s[ok, 1] - pref[1])))


def gaussian_density(x, mean, var):
    """Isotropic bivariate normal density."""
    d2 = float(np.sum((np.asarray(x, float) - mean) ** 2))
    return math.exp(-0.5 * d2 / var) / (2 * math.pi * var)


def gmm3_sample(seed, n=500, sigma=0.1, min_sep=1.0, box=4.0):
    """Particles from three equally weighted isotropic Gaussians with well separated means."""
    rng = np.random.default_rng(seed)
    while True:
        means = rng.uniform(0, box, (3, 2))
        d = np.hypot(*(means[:, None, :] - means[None, :, :]).transpose(2, 0, 1))
        if d[np.triu_indices(3, 1)].min() >= min_sep:
            break
    counts = rng.multinomial(n, [1 / 3] * 3)
    pos = np.concatenate([rng.normal(m, sigma, (c, 2)) for m, c in zip(means, counts)])
    return pos, means


def means_recovered(found, truth, tol):
    """Same count and an assignment with every mean within ``tol``."""
    from itertools import permutations

    found = np.asarray(found).reshape(-1, 2)
    if len(found) != len(truth):
        return False
    return any(
        np.all(np.hypot(*(found[list(p)] - truth).T) <= tol) for p in permutations(range(len(truth)))
    )
