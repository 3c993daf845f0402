"""Hot loops of the particle tracker, numba and numpy versions side by side."""

import math

import numpy as np

from .._accel import njit, pick

SQRT_2PI = math.sqrt(2.0 * math.pi)


# -- measurement weighting --------------------------------------------------

@njit
def detection_weights_nb(pos, meas, sigma, clutter_frac, clutter_density):
    """Per-particle weight with every detection carrying equal mass.

    w_i = (1 - c) * (1/M) sum_j N(x_i; z_j) / sum_k N(x_k; z_j) + c * density_i
    where density_i is the clutter density normalised over the particle set.
    """
    n = pos.shape[0]
    m = meas.shape[0]
    out = np.zeros(n)
    k = np.empty(n)
    inv2s2 = 0.5 / (sigma * sigma)
    for j in range(m):
        tot = 0.0
        for i in range(n):
            dx = pos[i, 0] - meas[j, 0]
            dy = pos[i, 1] - meas[j, 1]
            k[i] = math.exp(-(dx * dx + dy * dy) * inv2s2)
            tot += k[i]
        if tot > 0.0:
            s = (1.0 - clutter_frac) / (m * tot)
            for i in range(n):
                out[i] += k[i] * s
    ctot = 0.0
    for i in range(n):
        ctot += clutter_density[i]
    if ctot > 0.0:
        for i in range(n):
            out[i] += clutter_frac * clutter_density[i] / ctot
    return out


def detection_weights_np(pos, meas, sigma, clutter_frac, clutter_density):
    m = meas.shape[0]
    d2 = ((pos[:, None, :] - meas[None, :, :]) ** 2).sum(axis=2)
    k = np.exp(-0.5 * d2 / (sigma * sigma))
    tot = k.sum(axis=0)
    ok = tot > 0.0
    out = (k[:, ok] / tot[ok]).sum(axis=1) * ((1.0 - clutter_frac) / m)
    ctot = clutter_density.sum()
    if ctot > 0.0:
        out = out + clutter_frac * clutter_density / ctot
    return out


def detection_weights(pos, meas, sigma, clutter_frac, clutter_density, backend=None):
    fn = pick(detection_weights_nb, detection_weights_np, backend)
    return fn(
        np.ascontiguousarray(pos, dtype=np.float64),
        np.ascontiguousarray(meas, dtype=np.float64).reshape(-1, 2),
        float(sigma),
        float(clutter_frac),
        np.ascontiguousarray(clutter_density, dtype=np.float64),
    )


# -- systematic resampling --------------------------------------------------

@njit
def systematic_resample_nb(weights, u0):
    n = weights.shape[0]
    idx = np.empty(n, dtype=np.int64)
    total = 0.0
    for i in range(n):
        total += weights[i]
    step = total / n
    u = u0 * step
    c = weights[0]
    j = 0
    for i in range(n):
        while u > c and j < n - 1:
            j += 1
            c += weights[j]
        idx[i] = j
        u += step
    return idx


def systematic_resample_np(weights, u0):
    n = len(weights)
    c = np.cumsum(weights)
    u = (u0 + np.arange(n)) * (c[-1] / n)
    return np.minimum(np.searchsorted(c, u, side="left"), n - 1).astype(np.int64)


def systematic_resample(weights, u0, backend=None):
    """Indices drawn by systematic resampling; ``u0`` is a single U(0,1) draw."""
    fn = pick(systematic_resample_nb, systematic_resample_np, backend)
    return fn(np.ascontiguousarray(weights, dtype=np.float64), float(u0))


# -- linear gate pass of KClusterize ----------------------------------------

@njit
def gate_pass_nb(pos, weights, gate):
    """Single pass: join the nearest running centre within ``gate`` or open a cluster."""
    n = pos.shape[0]
    labels = np.empty(n, dtype=np.int64)
    cx = np.empty(n)
    cy = np.empty(n)
    cw = np.empty(n)
    k = 0
    g2 = gate * gate
    for i in range(n):
        best = -1
        bd = g2
        for c in range(k):
            dx = pos[i, 0] - cx[c]
            dy = pos[i, 1] - cy[c]
            d = dx * dx + dy * dy
            if d <= bd:
                bd = d
                best = c
        w = weights[i] if weights[i] > 0.0 else 1e-300
        if best < 0:
            cx[k] = pos[i, 0]
            cy[k] = pos[i, 1]
            cw[k] = w
            labels[i] = k
            k += 1
        else:
            tw = cw[best] + w
            cx[best] += (pos[i, 0] - cx[best]) * (w / tw)
            cy[best] += (pos[i, 1] - cy[best]) * (w / tw)
            cw[best] = tw
            labels[i] = best
    return labels, k


def gate_pass_np(pos, weights, gate):
    n = len(pos)
    labels = np.empty(n, dtype=np.int64)
    centres = np.empty((n, 2))
    cw = np.empty(n)
    k = 0
    g2 = gate * gate
    for i in range(n):
        p = pos[i]
        best = -1
        if k:
            d = ((centres[:k] - p) ** 2).sum(axis=1)
            # last minimum wins, as in the loop version
            j = k - 1 - int(np.argmin(d[::-1]))
            if d[j] <= g2:
                best = j
        w = weights[i] if weights[i] > 0.0 else 1e-300
        if best < 0:
            centres[k] = p
            cw[k] = w
            labels[i] = k
            k += 1
        else:
            tw = cw[best] + w
            centres[best] += (p - centres[best]) * (w / tw)
            cw[best] = tw
            labels[i] = best
    return labels, k


def gate_pass(pos, weights, gate, backend=None):
    fn = pick(gate_pass_nb, gate_pass_np, backend)
    labels, k = fn(
        np.ascontiguousarray(pos, dtype=np.float64),
        np.ascontiguousarray(weights, dtype=np.float64),
        float(gate),
    )
    return labels, int(k)
