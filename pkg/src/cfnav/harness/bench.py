"""Timing of the inference step and of the numba vs numpy kernels."""

from __future__ import annotations

import time

import numpy as np

from .. import _hrvo_kernels as K
from .._accel import HAVE_NUMBA
from ..intent import InferenceConfig, InferenceSnapshot, infer_all
from ..tracking import _pf_kernels as PK
from ..world import AgentState, GoalSet


def random_crowd(n, seed=0, extent=None, min_gap=1.0):
    """``n`` non-overlapping agents with small random velocities.

    The square side grows with sqrt(n) so crowd density is the same for
    every ``n`` (0.25 agents per square metre).
    """
    rng = np.random.default_rng(seed)
    extent = extent or 2.0 * np.sqrt(n)
    pts = []
    while len(pts) < n:
        p = rng.uniform(0.0, extent, 2)
        if all(np.hypot(*(p - q)) >= min_gap for q in pts):
            pts.append(p)
    return [AgentState(i, p, rng.uniform(-0.5, 0.5, 2)) for i, p in enumerate(pts)]


def _goal_ring(n_goals, extent):
    ang = 2 * np.pi * np.arange(n_goals) / n_goals + np.pi / 2
    c = extent / 2
    r = 0.9 * c
    return GoalSet(np.column_stack([c + r * np.cos(ang), c + r * np.sin(ang)]))


def crowd_scenario(n_agents, n_goals=3, duration=12.0):
    """Planner crowd moving between goals on a ring, density fixed by the room size."""
    from .scenario import from_dict

    side = 2.0 * np.sqrt(n_agents) + 2.0
    k = int(np.ceil(np.sqrt(n_agents)))
    sp = side / (k + 1)
    pos = [[sp * (1 + i % k), sp * (1 + i // k)] for i in range(n_agents)]
    goals = _goal_ring(n_goals, side)
    return from_dict(
        {
            "name": f"crowd{n_agents}",
            "duration": duration,
            "step_dt": 0.1,
            "goals": {"points": goals.points.tolist()},
            "agents": [{"id": i, "position": p, "behavior": {"type": "random"}} for i, p in enumerate(pos)],
        }
    )


def bench_infer(n_agents=5, n_goals=3, repeats=3, backend=None, seed=0):
    """Median wall time of one ``infer_all`` call, in seconds.

    The observations are consecutive frames of a simulated crowd (after a
    2 s settling period), so neighbour interactions look like real traffic.
    Each of ``repeats`` passes replays the frames in order.
    """
    from .runner import run_scenario

    scn = crowd_scenario(n_agents, n_goals)
    frames = [w.agents for w in run_scenario(scn, seed=seed).truth[20:]]
    cfg = InferenceConfig(backend=backend)
    dt = scn.step_dt
    times = []
    for _ in range(repeats + 1):
        snap = infer_all(InferenceSnapshot.empty(), frames[0], scn.goals, dt, config=cfg)
        for f in frames[1:]:
            t0 = time.perf_counter()
            out = infer_all(snap, f, scn.goals, dt, config=cfg)
            times.append(time.perf_counter() - t0)
            if out.n_simulations != n_agents * n_goals:
                raise AssertionError("unexpected simulation count")
            snap = out
    # first pass is warm-up (JIT compile, caches)
    return float(np.median(times[len(frames) - 1 :]))


def _time(fn, args, repeats):
    fn(*args)
    ts = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        ts.append(time.perf_counter() - t0)
    return float(np.median(ts))


def bench_kernels(repeats=50, seed=0):
    """Median seconds per call for each kernel under both backends."""
    from ..intent import _neighbor_table
    from ..hrvo import HrvoConfig

    rng = np.random.default_rng(seed)
    agents = random_crowd(20, seed)
    P = np.array([a.position for a in agents])
    V = np.array([a.velocity for a in agents])
    R = np.full(20, 0.4)
    ones = np.ones(20)
    nbr = _neighbor_table(P, R, HrvoConfig())
    goals = np.ascontiguousarray(_goal_ring(3, 8.0).points)
    which = np.arange(20, dtype=np.int64)
    cf_args = (P, V, R, ones, ones * 1.5, ones * 2.0, nbr, which, goals, 0.1)

    pos = rng.normal(0.0, 1.0, (500, 2))
    meas = rng.normal(0.0, 1.0, (5, 2))
    w = rng.random(500)
    w /= w.sum()
    cases = {
        "counterfactual_batch (20 agents x 3 goals)": (K.counterfactual_batch_nb, K.counterfactual_batch_np, cf_args),
        "detection_weights (500 particles, 5 detections)": (
            PK.detection_weights_nb, PK.detection_weights_np, (pos, meas, 0.1, 0.05, np.ones(500))
        ),
        "systematic_resample (500)": (PK.systematic_resample_nb, PK.systematic_resample_np, (w, 0.37)),
        "gate_pass (500)": (PK.gate_pass_nb, PK.gate_pass_np, (pos, w, 0.4)),
    }
    out = {}
    for name, (nb, np_, args) in cases.items():
        row = {"numpy": _time(np_, args, repeats)}
        if HAVE_NUMBA:
            row["numba"] = _time(nb, args, repeats)
            row["speedup"] = row["numpy"] / row["numba"] if row["numba"] > 0 else float("inf")
        out[name] = row
    return out
