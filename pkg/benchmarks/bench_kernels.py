"""Compare the numba and numpy implementations of the hot kernels.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats N] [--agents 5 20]

Also checks that both backends return the same numbers, and times
``infer_all`` under the active backend (``CFNAV_BACKEND``).
"""
import argparse
import time

import numpy as np

from cfnav import _hrvo_kernels as K
from cfnav._accel import BACKEND, HAVE_NUMBA
from cfnav.harness.bench import bench_infer, bench_kernels, random_crowd
from cfnav.hrvo import HrvoConfig
from cfnav.intent import _neighbor_table
from cfnav.tracking import _pf_kernels as PK


def parity(seed=0):
    """Max abs difference between backends per kernel."""
    if not HAVE_NUMBA:
        return {}
    rng = np.random.default_rng(seed)
    ag = random_crowd(20, seed)
    P = np.array([a.position for a in ag])
    V = np.array([a.velocity for a in ag])
    R = np.full(20, 0.4)
    one = np.ones(20)
    nbr = _neighbor_table(P, R, HrvoConfig())
    goals = np.array([[0.0, 0.0], [8.0, 0.0], [4.0, 7.0]])
    args = (P, V, R, one, one * 1.5, one * 2.0, nbr, np.arange(20, dtype=np.int64), goals, 0.1)
    out = {"counterfactual_batch": np.abs(K.counterfactual_batch_nb(*args) - K.counterfactual_batch_np(*args)).max()}
    pos = rng.normal(size=(500, 2))
    meas = rng.normal(size=(5, 2))
    a = PK.detection_weights_nb(pos, meas, 0.1, 0.05, np.ones(500))
    b = PK.detection_weights_np(pos, meas, 0.1, 0.05, np.ones(500))
    out["detection_weights"] = np.abs(a - b).max()
    w = rng.random(500)
    w /= w.sum()
    out["systematic_resample"] = float(np.any(PK.systematic_resample_nb(w, 0.3) != PK.systematic_resample_np(w, 0.3)))
    la, ka = PK.gate_pass_nb(pos, w, 0.4)
    lb, kb = PK.gate_pass_np(pos, w, 0.4)
    out["gate_pass"] = float(ka != kb or np.any(la != lb))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=50)
    ap.add_argument("--agents", type=int, nargs="+", default=[5, 20])
    args = ap.parse_args()

    t0 = time.perf_counter()
    print(f"numba available: {HAVE_NUMBA}, active backend: {BACKEND}")
    print("\nkernel                                              numpy ms   numba ms   speedup")
    for name, row in bench_kernels(args.repeats).items():
        nb = row.get("numba")
        sp = row.get("speedup")
        print(f"{name:50s} {row['numpy'] * 1e3:9.4f} {nb * 1e3 if nb else float('nan'):10.4f} {sp if sp else float('nan'):9.1f}")

    print("\nbackend parity (max abs diff / mismatch flag)")
    for k, v in parity().items():
        print(f"  {k:22s} {v:.3g}")

    print("\ninfer_all, 3 goals, median ms")
    res = {}
    for backend in ("numba", "numpy") if HAVE_NUMBA else ("numpy",):
        for n in args.agents:
            res[backend, n] = bench_infer(n, 3, backend=backend) * 1e3
            print(f"  {backend:6s} {n:3d} agents  {res[backend, n]:8.3f}")
    lo, hi = min(args.agents), max(args.agents)
    for backend in {b for b, _ in res}:
        print(f"  {backend}: {hi}/{lo} agent ratio {res[backend, hi] / res[backend, lo]:.2f}")
    print(f"\ntotal {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
