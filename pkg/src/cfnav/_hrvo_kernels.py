"""Velocity-obstacle kernels.

Each kernel has an ``_nb`` twin compiled with numba and an ``_np`` twin in
plain numpy. Both produce the same candidate set in the same order so the
selected velocity agrees to rounding.

Cone layout: ``apex`` (k, 2), ``left`` (k, 2), ``right`` (k, 2) unit legs.
A velocity ``v`` is strictly inside cone ``i`` when ``w = v - apex[i]``
satisfies ``det(right, w) > tol`` and ``det(w, left) > tol``.
"""

import math

import numpy as np

from ._accel import njit, pick
from .world import clamp_to_envelope

INSIDE_TOL = 1e-9
ENV_TOL = 1e-9
TIE_TOL = 1e-12

STATUS_FREE = 0
STATUS_AVOIDING = 1
STATUS_CONSTRAINED = 2

_N_SAMPLE_ANGLES = 16
_SAMPLE_RADII = (0.25, 0.5, 0.75, 1.0)


# --------------------------------------------------------------------------
# region construction


def hrvo_regions_np(pos, vel, radius, opos, ovel, orad):
    opos = np.asarray(opos, dtype=np.float64).reshape(-1, 2)
    ovel = np.asarray(ovel, dtype=np.float64).reshape(-1, 2)
    orad = np.asarray(orad, dtype=np.float64).reshape(-1)
    p = opos - pos
    dist = np.hypot(p[:, 0], p[:, 1])
    comb = radius + orad
    overlap = dist <= comb
    safe_dist = np.where(overlap, 1.0, dist)
    ratio = np.where(overlap, 0.0, comb / safe_dist)
    half = np.arcsin(np.clip(ratio, 0.0, 1.0))
    ang = np.arctan2(p[:, 1], p[:, 0])
    right = np.stack([np.cos(ang - half), np.sin(ang - half)], axis=1)
    left = np.stack([np.cos(ang + half), np.sin(ang + half)], axis=1)
    d = 2.0 * np.sin(half) * np.cos(half)
    d = np.where(d == 0.0, 1.0, d)
    vrel = vel - ovel
    side = p[:, 0] * vrel[:, 1] - p[:, 1] * vrel[:, 0]
    s_left = 0.5 * (vrel[:, 0] * left[:, 1] - vrel[:, 1] * left[:, 0]) / d
    s_right = -0.5 * (vrel[:, 0] * right[:, 1] - vrel[:, 1] * right[:, 0]) / d
    apex = np.where(
        (side > 0.0)[:, None],
        ovel + s_left[:, None] * right,
        ovel + s_right[:, None] * left,
    )
    apex = np.where(overlap[:, None], 0.5 * (vel + ovel), apex)
    return apex, left, right, overlap


@njit
def hrvo_regions_nb(pos, vel, radius, opos, ovel, orad):
    k = opos.shape[0]
    apex = np.empty((k, 2))
    left = np.empty((k, 2))
    right = np.empty((k, 2))
    overlap = np.zeros(k, dtype=np.bool_)
    for i in range(k):
        px = opos[i, 0] - pos[0]
        py = opos[i, 1] - pos[1]
        dist = math.hypot(px, py)
        comb = radius + orad[i]
        if dist <= comb:
            overlap[i] = True
            half = 0.0
        else:
            half = math.asin(min(comb / dist, 1.0))
        ang = math.atan2(py, px)
        right[i, 0] = math.cos(ang - half)
        right[i, 1] = math.sin(ang - half)
        left[i, 0] = math.cos(ang + half)
        left[i, 1] = math.sin(ang + half)
        if overlap[i]:
            apex[i, 0] = 0.5 * (vel[0] + ovel[i, 0])
            apex[i, 1] = 0.5 * (vel[1] + ovel[i, 1])
            continue
        d = 2.0 * math.sin(half) * math.cos(half)
        if d == 0.0:
            d = 1.0
        rx = vel[0] - ovel[i, 0]
        ry = vel[1] - ovel[i, 1]
        side = px * ry - py * rx
        if side > 0.0:
            s = 0.5 * (rx * left[i, 1] - ry * left[i, 0]) / d
            apex[i, 0] = ovel[i, 0] + s * right[i, 0]
            apex[i, 1] = ovel[i, 1] + s * right[i, 1]
        else:
            s = -0.5 * (rx * right[i, 1] - ry * right[i, 0]) / d
            apex[i, 0] = ovel[i, 0] + s * left[i, 0]
            apex[i, 1] = ovel[i, 1] + s * left[i, 1]
    return apex, left, right, overlap


# --------------------------------------------------------------------------
# velocity selection


def _clockwise_angle(ref_x, ref_y, cx, cy):
    ang = math.atan2(ref_x * cy - ref_y * cx, ref_x * cx + ref_y * cy)
    cw = -ang
    if cw < 0.0:
        cw += 2.0 * math.pi
    return cw


_clockwise_angle_nb = njit(_clockwise_angle)


@njit
def _envelope_clamp_nb(cx, cy, ux, uy, max_speed, max_dv):
    in_accel = math.hypot(cx - ux, cy - uy) <= max_dv + ENV_TOL
    in_speed = math.hypot(cx, cy) <= max_speed + ENV_TOL
    if in_accel and in_speed:
        return cx, cy
    if not in_accel:
        d = math.hypot(cx - ux, cy - uy)
        ax = ux + (cx - ux) * max_dv / d
        ay = uy + (cy - uy) * max_dv / d
    else:
        ax = cx
        ay = cy
    if math.hypot(ax, ay) <= max_speed + ENV_TOL:
        return ax, ay
    s = math.hypot(cx, cy)
    if s < 1e-12:
        bx = 0.0
        by = 0.0
    else:
        bx = cx * max_speed / s
        by = cy * max_speed / s
    if math.hypot(bx - ux, by - uy) <= max_dv + ENV_TOL:
        return bx, by
    d = math.hypot(ux, uy)
    if d < 1e-12 or d > max_speed + max_dv or d < abs(max_speed - max_dv):
        return bx, by
    a = (max_dv * max_dv - max_speed * max_speed + d * d) / (2.0 * d)
    h = math.sqrt(max(max_dv * max_dv - a * a, 0.0))
    ex = -ux / d
    ey = -uy / d
    mx = ux + a * ex
    my = uy + a * ey
    p1x = mx - h * ey
    p1y = my + h * ex
    p2x = mx + h * ey
    p2y = my - h * ex
    if math.hypot(p1x - cx, p1y - cy) <= math.hypot(p2x - cx, p2y - cy):
        return p1x, p1y
    return p2x, p2y


@njit
def _candidates_nb(pref, cur, max_speed, max_dv, apex, left, right):
    k = apex.shape[0]
    nr = 2 * k
    cap = 5 + 3 * k + (nr * (nr - 1)) // 2 + 4 * nr
    out = np.empty((cap, 2))
    n = 0
    px = pref[0]
    py = pref[1]
    ux = cur[0]
    uy = cur[1]

    out[n, 0] = px
    out[n, 1] = py
    n += 1
    # nearest points of the two envelope circles
    d = math.hypot(px - ux, py - uy)
    if d > 1e-12:
        out[n, 0] = ux + (px - ux) * max_dv / d
        out[n, 1] = uy + (py - uy) * max_dv / d
        n += 1
    s = math.hypot(px, py)
    if s > 1e-12:
        out[n, 0] = px * max_speed / s
        out[n, 1] = py * max_speed / s
        n += 1
    # circle-circle intersections
    dc = math.hypot(ux, uy)
    if dc > 1e-12 and dc <= max_speed + max_dv and dc >= abs(max_speed - max_dv):
        a = (max_dv * max_dv - max_speed * max_speed + dc * dc) / (2.0 * dc)
        h = math.sqrt(max(max_dv * max_dv - a * a, 0.0))
        ex = -ux / dc
        ey = -uy / dc
        mx = ux + a * ex
        my = uy + a * ey
        out[n, 0] = mx - h * ey
        out[n, 1] = my + h * ex
        n += 1
        out[n, 0] = mx + h * ey
        out[n, 1] = my - h * ex
        n += 1

    # rays: index r -> (apex[r // 2], left if r even else right)
    for i in range(k):
        out[n, 0] = apex[i, 0]
        out[n, 1] = apex[i, 1]
        n += 1
    for r in range(nr):
        i = r // 2
        if r % 2 == 0:
            dx = left[i, 0]
            dy = left[i, 1]
        else:
            dx = right[i, 0]
            dy = right[i, 1]
        t = (px - apex[i, 0]) * dx + (py - apex[i, 1]) * dy
        if t > 0.0:
            out[n, 0] = apex[i, 0] + t * dx
            out[n, 1] = apex[i, 1] + t * dy
            n += 1
    for r1 in range(nr):
        i1 = r1 // 2
        if r1 % 2 == 0:
            d1x = left[i1, 0]
            d1y = left[i1, 1]
        else:
            d1x = right[i1, 0]
            d1y = right[i1, 1]
        for r2 in range(r1 + 1, nr):
            i2 = r2 // 2
            if i2 == i1:
                continue
            if r2 % 2 == 0:
                d2x = left[i2, 0]
                d2y = left[i2, 1]
            else:
                d2x = right[i2, 0]
                d2y = right[i2, 1]
            den = d1x * d2y - d1y * d2x
            if abs(den) < 1e-12:
                continue
            qx = apex[i2, 0] - apex[i1, 0]
            qy = apex[i2, 1] - apex[i1, 1]
            t1 = (qx * d2y - qy * d2x) / den
            t2 = (qx * d1y - qy * d1x) / den
            if t1 >= 0.0 and t2 >= 0.0:
                out[n, 0] = apex[i1, 0] + t1 * d1x
                out[n, 1] = apex[i1, 1] + t1 * d1y
                n += 1
    # ray / circle intersections
    for r in range(nr):
        i = r // 2
        if r % 2 == 0:
            dx = left[i, 0]
            dy = left[i, 1]
        else:
            dx = right[i, 0]
            dy = right[i, 1]
        for c in range(2):
            if c == 0:
                cx = ux
                cy = uy
                rad = max_dv
            else:
                cx = 0.0
                cy = 0.0
                rad = max_speed
            fx = apex[i, 0] - cx
            fy = apex[i, 1] - cy
            b = fx * dx + fy * dy
            cc = fx * fx + fy * fy - rad * rad
            disc = b * b - cc
            if disc < 0.0:
                continue
            sq = math.sqrt(disc)
            for sign in (-1.0, 1.0):
                t = -b + sign * sq
                if t >= 0.0:
                    out[n, 0] = apex[i, 0] + t * dx
                    out[n, 1] = apex[i, 1] + t * dy
                    n += 1
    return out[:n]


def _candidates_np(pref, cur, max_speed, max_dv, apex, left, right):
    px, py = float(pref[0]), float(pref[1])
    ux, uy = float(cur[0]), float(cur[1])
    k = apex.shape[0]
    parts = [np.array([[px, py]])]
    d = math.hypot(px - ux, py - uy)
    if d > 1e-12:
        parts.append(np.array([[ux + (px - ux) * max_dv / d, uy + (py - uy) * max_dv / d]]))
    s = math.hypot(px, py)
    if s > 1e-12:
        parts.append(np.array([[px * max_speed / s, py * max_speed / s]]))
    dc = math.hypot(ux, uy)
    if dc > 1e-12 and dc <= max_speed + max_dv and dc >= abs(max_speed - max_dv):
        a = (max_dv * max_dv - max_speed * max_speed + dc * dc) / (2.0 * dc)
        h = math.sqrt(max(max_dv * max_dv - a * a, 0.0))
        ex, ey = -ux / dc, -uy / dc
        mx, my = ux + a * ex, uy + a * ey
        parts.append(np.array([[mx - h * ey, my + h * ex], [mx + h * ey, my - h * ex]]))
    if k == 0:
        return np.concatenate(parts)

    parts.append(apex)
    # rays interleaved left/right per region, same order as the numba kernel
    ray_o = np.repeat(apex, 2, axis=0)
    ray_d = np.empty((2 * k, 2))
    ray_d[0::2] = left
    ray_d[1::2] = right
    ray_i = np.repeat(np.arange(k), 2)

    t = (px - ray_o[:, 0]) * ray_d[:, 0] + (py - ray_o[:, 1]) * ray_d[:, 1]
    m = t > 0.0
    parts.append(ray_o[m] + t[m, None] * ray_d[m])

    r1, r2 = np.triu_indices(2 * k, k=1)
    keep = ray_i[r1] != ray_i[r2]
    r1, r2 = r1[keep], r2[keep]
    d1, d2 = ray_d[r1], ray_d[r2]
    den = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    ok = np.abs(den) >= 1e-12
    q = ray_o[r2] - ray_o[r1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (q[:, 0] * d2[:, 1] - q[:, 1] * d2[:, 0]) / den
        t2 = (q[:, 0] * d1[:, 1] - q[:, 1] * d1[:, 0]) / den
    ok &= (t1 >= 0.0) & (t2 >= 0.0)
    parts.append(ray_o[r1[ok]] + t1[ok, None] * d1[ok])

    # ray/circle: per ray, accel circle (-,+) then speed circle (-,+)
    pts = np.empty((2 * k, 4, 2))
    valid = np.zeros((2 * k, 4), dtype=bool)
    for c, (cx, cy, rad) in enumerate(((ux, uy, max_dv), (0.0, 0.0, max_speed))):
        f = ray_o - np.array([cx, cy])
        b = f[:, 0] * ray_d[:, 0] + f[:, 1] * ray_d[:, 1]
        cc = f[:, 0] ** 2 + f[:, 1] ** 2 - rad * rad
        disc = b * b - cc
        sq = np.sqrt(np.maximum(disc, 0.0))
        for j, sign in enumerate((-1.0, 1.0)):
            tt = -b + sign * sq
            pts[:, 2 * c + j] = ray_o + tt[:, None] * ray_d
            valid[:, 2 * c + j] = (disc >= 0.0) & (tt >= 0.0)
    parts.append(pts[valid])
    return np.concatenate(parts)


@njit
def _max_penetration_nb(vx, vy, apex, left, right):
    worst = 0.0
    for i in range(apex.shape[0]):
        wx = vx - apex[i, 0]
        wy = vy - apex[i, 1]
        a = right[i, 0] * wy - right[i, 1] * wx
        b = wx * left[i, 1] - wy * left[i, 0]
        if a > INSIDE_TOL and b > INSIDE_TOL:
            depth = min(a, b)
            if depth > worst:
                worst = depth
    return worst


@njit
def _is_free_nb(vx, vy, apex, left, right):
    for i in range(apex.shape[0]):
        wx = vx - apex[i, 0]
        wy = vy - apex[i, 1]
        if right[i, 0] * wy - right[i, 1] * wx > INSIDE_TOL and wx * left[i, 1] - wy * left[i, 0] > INSIDE_TOL:
            return False
    return True


@njit
def _penetration_bounded_nb(vx, vy, apex, left, right, bound):
    """Like :func:`_max_penetration_nb` but stops once the depth exceeds ``bound``."""
    worst = 0.0
    for i in range(apex.shape[0]):
        wx = vx - apex[i, 0]
        wy = vy - apex[i, 1]
        a = right[i, 0] * wy - right[i, 1] * wx
        b = wx * left[i, 1] - wy * left[i, 0]
        if a > INSIDE_TOL and b > INSIDE_TOL:
            depth = min(a, b)
            if depth > worst:
                worst = depth
                if worst > bound:
                    return worst
    return worst


@njit
def _point_cone_dist_nb(cx, cy, ax, ay, lx, ly, rx, ry):
    wx = cx - ax
    wy = cy - ay
    if rx * wy - ry * wx >= 0.0 and wx * ly - wy * lx >= 0.0:
        return 0.0
    best = math.hypot(wx, wy)
    for dx, dy in ((lx, ly), (rx, ry)):
        t = wx * dx + wy * dy
        if t > 0.0:
            dd = math.hypot(wx - t * dx, wy - t * dy)
            if dd < best:
                best = dd
    return best


@njit
def relevant_cones_nb(cur, max_dv, apex, left, right):
    k = apex.shape[0]
    keep = np.zeros(k, dtype=np.bool_)
    m = 0
    for i in range(k):
        if _point_cone_dist_nb(cur[0], cur[1], apex[i, 0], apex[i, 1], left[i, 0], left[i, 1], right[i, 0], right[i, 1]) <= max_dv + ENV_TOL:
            keep[i] = True
            m += 1
    a2 = np.empty((m, 2))
    l2 = np.empty((m, 2))
    r2 = np.empty((m, 2))
    j = 0
    for i in range(k):
        if keep[i]:
            a2[j] = apex[i]
            l2[j] = left[i]
            r2[j] = right[i]
            j += 1
    return a2, l2, r2


def relevant_cones_np(cur, max_dv, apex, left, right):
    """Drop cones that do not reach the acceleration disc around ``cur``."""
    if apex.shape[0] == 0:
        return apex, left, right
    w = np.asarray(cur, dtype=np.float64)[None, :] - apex
    inside = (right[:, 0] * w[:, 1] - right[:, 1] * w[:, 0] >= 0.0) & (w[:, 0] * left[:, 1] - w[:, 1] * left[:, 0] >= 0.0)
    dist = np.hypot(w[:, 0], w[:, 1])
    for legs in (left, right):
        t = w[:, 0] * legs[:, 0] + w[:, 1] * legs[:, 1]
        perp = np.hypot(w[:, 0] - t * legs[:, 0], w[:, 1] - t * legs[:, 1])
        dist = np.where(t > 0.0, np.minimum(dist, perp), dist)
    dist = np.where(inside, 0.0, dist)
    keep = dist <= max_dv + ENV_TOL
    return apex[keep], left[keep], right[keep]


@njit
def select_velocity_nb(pref, cur, max_speed, max_dv, apex, left, right):
    apex, left, right = relevant_cones_nb(cur, max_dv, apex, left, right)
    cand = _candidates_nb(pref, cur, max_speed, max_dv, apex, left, right)
    px = pref[0]
    py = pref[1]
    if math.hypot(px, py) > 1e-12:
        refx = px
        refy = py
    else:
        refx = 1.0
        refy = 0.0
    best = -1
    best_d = np.inf
    best_ang = np.inf
    for c in range(cand.shape[0]):
        vx = cand[c, 0]
        vy = cand[c, 1]
        if math.hypot(vx - cur[0], vy - cur[1]) > max_dv + ENV_TOL:
            continue
        if math.hypot(vx, vy) > max_speed + ENV_TOL:
            continue
        if not _is_free_nb(vx, vy, apex, left, right):
            continue
        d = math.hypot(vx - px, vy - py)
        ang = _clockwise_angle_nb(refx, refy, vx, vy)
        if d < best_d - TIE_TOL or (abs(d - best_d) <= TIE_TOL and ang < best_ang):
            best = c
            best_d = d
            best_ang = ang
    if best >= 0:
        status = STATUS_FREE if best == 0 else STATUS_AVOIDING
        return cand[best, 0], cand[best, 1], status

    # nothing feasible: least-penetrating reachable velocity
    n_extra = 1 + _N_SAMPLE_ANGLES * len(_SAMPLE_RADII)
    pool = np.empty((cand.shape[0] + n_extra, 2))
    for c in range(cand.shape[0]):
        qx, qy = _envelope_clamp_nb(cand[c, 0], cand[c, 1], cur[0], cur[1], max_speed, max_dv)
        pool[c, 0] = qx
        pool[c, 1] = qy
    n = cand.shape[0]
    qx, qy = _envelope_clamp_nb(cur[0], cur[1], cur[0], cur[1], max_speed, max_dv)
    pool[n, 0] = qx
    pool[n, 1] = qy
    n += 1
    for ri in range(len(_SAMPLE_RADII)):
        rr = _SAMPLE_RADII[ri] * max_dv
        for ai in range(_N_SAMPLE_ANGLES):
            th = 2.0 * math.pi * ai / _N_SAMPLE_ANGLES
            qx, qy = _envelope_clamp_nb(
                cur[0] + rr * math.cos(th), cur[1] + rr * math.sin(th), cur[0], cur[1], max_speed, max_dv
            )
            pool[n, 0] = qx
            pool[n, 1] = qy
            n += 1
    best = 0
    best_pen = np.inf
    best_d = np.inf
    for c in range(n):
        # a partial depth above best_pen already rules the point out
        pen = _penetration_bounded_nb(pool[c, 0], pool[c, 1], apex, left, right, best_pen + TIE_TOL)
        d = math.hypot(pool[c, 0] - px, pool[c, 1] - py)
        if pen < best_pen - TIE_TOL or (abs(pen - best_pen) <= TIE_TOL and d < best_d - TIE_TOL):
            best = c
            best_pen = pen
            best_d = d
    return pool[best, 0], pool[best, 1], STATUS_CONSTRAINED


def _penetration_np(points, apex, left, right):
    if apex.shape[0] == 0:
        return np.zeros(len(points))
    w = points[:, None, :] - apex[None, :, :]
    a = right[None, :, 0] * w[..., 1] - right[None, :, 1] * w[..., 0]
    b = w[..., 0] * left[None, :, 1] - w[..., 1] * left[None, :, 0]
    inside = (a > INSIDE_TOL) & (b > INSIDE_TOL)
    depth = np.where(inside, np.minimum(a, b), 0.0)
    return depth.max(axis=1)


def _clamp_many(points, cur, max_speed, max_dv):
    return np.array([clamp_to_envelope(p, cur, max_speed, max_dv)[0] for p in points])


def select_velocity_np(pref, cur, max_speed, max_dv, apex, left, right):
    apex = np.asarray(apex, dtype=np.float64).reshape(-1, 2)
    left = np.asarray(left, dtype=np.float64).reshape(-1, 2)
    right = np.asarray(right, dtype=np.float64).reshape(-1, 2)
    apex, left, right = relevant_cones_np(cur, max_dv, apex, left, right)
    cand = _candidates_np(pref, cur, max_speed, max_dv, apex, left, right)
    px, py = float(pref[0]), float(pref[1])
    ref = (px, py) if math.hypot(px, py) > 1e-12 else (1.0, 0.0)
    in_env = (np.hypot(cand[:, 0] - cur[0], cand[:, 1] - cur[1]) <= max_dv + ENV_TOL) & (
        np.hypot(cand[:, 0], cand[:, 1]) <= max_speed + ENV_TOL
    )
    pen = _penetration_np(cand, apex, left, right)
    ok = np.flatnonzero(in_env & (pen == 0.0))
    if len(ok):
        dist = np.hypot(cand[ok, 0] - px, cand[ok, 1] - py)
        best = -1
        best_d = np.inf
        best_ang = np.inf
        for idx, d in zip(ok, dist):
            ang = _clockwise_angle(ref[0], ref[1], cand[idx, 0], cand[idx, 1])
            if d < best_d - TIE_TOL or (abs(d - best_d) <= TIE_TOL and ang < best_ang):
                best, best_d, best_ang = idx, d, ang
        status = STATUS_FREE if best == 0 else STATUS_AVOIDING
        return float(cand[best, 0]), float(cand[best, 1]), status

    ux, uy = float(cur[0]), float(cur[1])
    samples = [(ux, uy)]
    for frac in _SAMPLE_RADII:
        rr = frac * max_dv
        for ai in range(_N_SAMPLE_ANGLES):
            th = 2.0 * math.pi * ai / _N_SAMPLE_ANGLES
            samples.append((ux + rr * math.cos(th), uy + rr * math.sin(th)))
    pool = _clamp_many(np.vstack([cand, np.array(samples)]), cur, max_speed, max_dv)
    pen = _penetration_np(pool, apex, left, right)
    dist = np.hypot(pool[:, 0] - px, pool[:, 1] - py)
    best = 0
    for c in range(1, len(pool)):
        if pen[c] < pen[best] - TIE_TOL or (abs(pen[c] - pen[best]) <= TIE_TOL and dist[c] < dist[best] - TIE_TOL):
            best = c
    return float(pool[best, 0]), float(pool[best, 1]), STATUS_CONSTRAINED


def hrvo_regions(pos, vel, radius, opos, ovel, orad, backend=None):
    fn = pick(hrvo_regions_nb, hrvo_regions_np, backend)
    return fn(
        np.asarray(pos, dtype=np.float64),
        np.asarray(vel, dtype=np.float64),
        float(radius),
        np.ascontiguousarray(opos, dtype=np.float64).reshape(-1, 2),
        np.ascontiguousarray(ovel, dtype=np.float64).reshape(-1, 2),
        np.ascontiguousarray(orad, dtype=np.float64).reshape(-1),
    )


def select_velocity_arrays(pref, cur, max_speed, max_dv, apex, left, right, backend=None):
    fn = pick(select_velocity_nb, select_velocity_np, backend)
    vx, vy, status = fn(
        np.asarray(pref, dtype=np.float64),
        np.asarray(cur, dtype=np.float64),
        float(max_speed),
        float(max_dv),
        np.ascontiguousarray(apex, dtype=np.float64).reshape(-1, 2),
        np.ascontiguousarray(left, dtype=np.float64).reshape(-1, 2),
        np.ascontiguousarray(right, dtype=np.float64).reshape(-1, 2),
    )
    return float(vx), float(vy), int(status)


# --------------------------------------------------------------------------
# batched counterfactual step


@njit
def _separation_nb(px, py, vx, vy, ix, iy, max_speed, max_dv):
    ax = px - ix
    ay = py - iy
    n = math.hypot(ax, ay)
    if n < 1e-9:
        if math.hypot(vx, vy) > 1e-9:
            hx = vx
            hy = vy
        else:
            hx = 1.0
            hy = 0.0
        ax = hy
        ay = -hx
        n = math.hypot(ax, ay)
    return _envelope_clamp_nb(ax / n * max_speed, ay / n * max_speed, vx, vy, max_speed, max_dv)


@njit
def counterfactual_batch_nb(P, V, R, pref_speed, max_speed, max_accel, nbr, which, goals, dt):
    """Simulated velocity of agent ``which[a]`` toward each goal, (len(which), g, 2)."""
    g = goals.shape[0]
    out = np.zeros((which.shape[0], g, 2))
    prefs = np.empty((g, 2))
    for a in range(which.shape[0]):
        j = which[a]
        m = 0
        while m < nbr.shape[1] and nbr[j, m] >= 0:
            m += 1
        opos = np.empty((m, 2))
        ovel = np.empty((m, 2))
        orad = np.empty(m)
        for q in range(m):
            opos[q] = P[nbr[j, q]]
            ovel[q] = V[nbr[j, q]]
            orad[q] = R[nbr[j, q]]
        max_dv = max_accel[j] * dt
        apex, left, right, overlap = hrvo_regions_nb(P[j], V[j], R[j], opos, ovel, orad)
        hit = -1
        for q in range(m):
            if overlap[q]:
                hit = q
                break
        if hit >= 0:
            sx, sy = _separation_nb(P[j, 0], P[j, 1], V[j, 0], V[j, 1], opos[hit, 0], opos[hit, 1], max_speed[j], max_dv)
            for gi in range(g):
                out[a, gi, 0] = sx
                out[a, gi, 1] = sy
            continue
        for gi in range(g):
            dx = goals[gi, 0] - P[j, 0]
            dy = goals[gi, 1] - P[j, 1]
            dist = math.hypot(dx, dy)
            if dist < 1e-9:
                prefs[gi, 0] = 0.0
                prefs[gi, 1] = 0.0
            else:
                sp = min(pref_speed[j], dist / dt)
                prefs[gi, 0] = dx * (sp / dist)
                prefs[gi, 1] = dy * (sp / dist)
        # cone pruning depends only on the current velocity: do it once per agent
        apex, left, right = relevant_cones_nb(V[j], max_dv, apex, left, right)
        for gi in range(g):
            vx, vy, _ = select_velocity_nb(prefs[gi], V[j], max_speed[j], max_dv, apex, left, right)
            out[a, gi, 0] = vx
            out[a, gi, 1] = vy
    return out


def counterfactual_batch_np(P, V, R, pref_speed, max_speed, max_accel, nbr, which, goals, dt):
    g = goals.shape[0]
    out = np.zeros((len(which), g, 2))
    for a, j in enumerate(which):
        idx = nbr[j][nbr[j] >= 0]
        max_dv = max_accel[j] * dt
        apex, left, right, overlap = hrvo_regions_np(P[j], V[j], R[j], P[idx], V[idx], R[idx])
        if overlap.any():
            ix, iy = P[idx[np.flatnonzero(overlap)[0]]]
            away = P[j] - (ix, iy)
            n = math.hypot(*away)
            if n < 1e-9:
                h = V[j] if math.hypot(*V[j]) > 1e-9 else np.array([1.0, 0.0])
                away = np.array([h[1], -h[0]])
                n = math.hypot(*away)
            out[a] = clamp_to_envelope(away / n * max_speed[j], V[j], max_speed[j], max_dv)[0]
            continue
        d = goals - P[j]
        dist = np.hypot(d[:, 0], d[:, 1])
        safe = np.where(dist < 1e-9, 1.0, dist)
        prefs = d * (np.minimum(pref_speed[j], dist / dt) / safe)[:, None]
        prefs[dist < 1e-9] = 0.0
        for gi in range(g):
            vx, vy, _ = select_velocity_np(prefs[gi], V[j], max_speed[j], max_dv, apex, left, right)
            out[a, gi] = vx, vy
    return out
