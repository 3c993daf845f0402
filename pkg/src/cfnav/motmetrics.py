"""CLEAR MOT accuracy and precision of a track trace against ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class FrameEval:
    time: float
    matches: tuple  # (track_id, truth_id, distance)
    misses: int
    false_positives: int
    id_switches: int
    n_truth: int


@dataclass(frozen=True)
class MotResult:
    mota: float
    motp: float  # 1 - mean distance / cutoff, higher is better
    motp_distance: float  # mean matched distance / cutoff, lower is better
    frames: list = field(default_factory=list)
    totals: dict = field(default_factory=dict)

    def as_dict(self):
        return {"mota": self.mota, "motp": self.motp, "motp_distance": self.motp_distance, **self.totals}


def _positions(frame):
    """``{id: (x, y)}`` from a TrackSet, WorldState or plain mapping (None is empty)."""
    if frame is None:
        return {}
    if hasattr(frame, "reported"):
        return {k: np.asarray(v, dtype=np.float64)[:2] for k, v in frame.reported().items()}
    if hasattr(frame, "agents") and not isinstance(frame, dict):
        return {a.id: np.asarray(a.position, dtype=np.float64) for a in frame.agents}
    return {k: np.asarray(v, dtype=np.float64)[:2] for k, v in dict(frame).items()}


def evaluate(track_trace, truth_trace, cutoff: float = 1.0, times=None) -> MotResult:
    """CLEAR MOT over time-aligned traces.

    Each frame first keeps last frame's truth-to-track pairs that are still
    within ``cutoff``, then assigns the rest optimally. A truth matched to a
    different track than at its previous match counts as an id switch.
    """
    if not cutoff > 0:
        raise EvaluationError("cutoff must be > 0")
    truth_trace = list(truth_trace)
    track_trace = list(track_trace)
    if not truth_trace:
        raise EvaluationError("truth trace is empty")
    if len(track_trace) != len(truth_trace):
        raise EvaluationError(f"trace lengths differ: {len(track_trace)} tracks vs {len(truth_trace)} truth")

    last_match: dict = {}  # truth id -> track id of its latest match
    prev_pairs: dict = {}  # truth id -> track id, previous frame only
    frames = []
    n_gt = n_miss = n_fp = n_sw = 0
    dist_sum = 0.0
    n_match = 0

    for f, (hyp_frame, gt_frame) in enumerate(zip(track_trace, truth_trace)):
        hyp = _positions(hyp_frame)
        gt = _positions(gt_frame)
        t = times[f] if times is not None else getattr(gt_frame, "time", float(f))
        pairs = {}
        used = set()
        for g, h in prev_pairs.items():
            if g in gt and h in hyp and h not in used:
                d = float(np.hypot(*(gt[g] - hyp[h])))
                if d <= cutoff:
                    pairs[g] = (h, d)
                    used.add(h)
        g_free = [g for g in gt if g not in pairs]
        h_free = [h for h in hyp if h not in used]
        if g_free and h_free:
            gp = np.array([gt[g] for g in g_free])
            hp = np.array([hyp[h] for h in h_free])
            D = np.hypot(gp[:, None, 0] - hp[None, :, 0], gp[:, None, 1] - hp[None, :, 1])
            C = np.where(D <= cutoff, D, 1e9)
            rows, cols = linear_sum_assignment(C)
            for r, c in zip(rows, cols):
                if D[r, c] <= cutoff:
                    pairs[g_free[r]] = (h_free[c], float(D[r, c]))

        switches = 0
        for g, (h, _) in pairs.items():
            if g in last_match and last_match[g] != h:
                switches += 1
            last_match[g] = h
        misses = len(gt) - len(pairs)
        fps = len(hyp) - len(pairs)
        n_gt += len(gt)
        n_miss += misses
        n_fp += fps
        n_sw += switches
        for _, d in pairs.values():
            dist_sum += d
        n_match += len(pairs)
        prev_pairs = {g: h for g, (h, _) in pairs.items()}
        frames.append(
            FrameEval(t, tuple((h, g, d) for g, (h, d) in pairs.items()), misses, fps, switches, len(gt))
        )

    # MOTA is undefined without any ground-truth object
    mota = 1.0 - (n_miss + n_fp + n_sw) / n_gt if n_gt else float("nan")
    if n_match:
        raw = dist_sum / n_match / cutoff
        motp = 1.0 - raw
    else:
        # no matches: no precision to speak of
        raw, motp = float("nan"), 0.0
    totals = {
        "truth": n_gt,
        "matches": n_match,
        "misses": n_miss,
        "false_positives": n_fp,
        "id_switches": n_sw,
        "frames": len(frames),
    }
    return MotResult(mota, motp, raw, frames, totals)
