import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cfnav.motmetrics import EvaluationError, evaluate


def straight_truth(n_frames=100, n_obj=3):
    return [{i: (0.1 * f, 2.0 * i) for i in range(n_obj)} for f in range(n_frames)]


def test_perfect_tracking():
    gt = straight_truth()
    r = evaluate(gt, gt)
    assert r.mota == 1.0 and r.motp == 1.0 and r.totals["id_switches"] == 0


def test_empty_output():
    gt = straight_truth()
    r = evaluate([{}] * len(gt), gt)
    assert r.mota == 0.0
    assert r.motp == 0.0 and math.isnan(r.motp_distance)


def test_constant_offset():
    gt = straight_truth()
    hyp = [{k + 10: (x + 0.25, y) for k, (x, y) in f.items()} for f in gt]
    r = evaluate(hyp, gt, cutoff=1.0)
    assert r.mota == 1.0
    assert r.motp == pytest.approx(0.75)
    assert r.motp_distance == pytest.approx(0.25)


def test_false_positive_lowers_mota():
    gt = straight_truth(20)
    base = evaluate(gt, gt).mota
    hyp = [dict(f) for f in gt]
    hyp[5][99] = (50.0, 50.0)
    assert evaluate(hyp, gt).mota < base


def test_beyond_cutoff_is_miss_and_fp():
    gt = [{0: (0.0, 0.0)}]
    r = evaluate([{0: (1.5, 0.0)}], gt, cutoff=1.0)
    assert r.totals["misses"] == 1 and r.totals["false_positives"] == 1
    assert r.mota == -1.0


def test_id_switch_counted():
    gt = [{0: (0.0, 0.0)}] * 6
    hyp = [{7: (0.0, 0.0)}] * 3 + [{8: (0.0, 0.0)}] * 3
    r = evaluate(hyp, gt)
    assert r.totals["id_switches"] == 1
    assert r.mota == pytest.approx(1 - 1 / 6)


def test_continuation_preferred_over_closer_track():
    # track 7 keeps its truth while within the cutoff even if 8 is closer
    gt = [{0: (0.0, 0.0)}] * 2
    hyp = [{7: (0.1, 0.0)}, {7: (0.5, 0.0), 8: (0.0, 0.0)}]
    r = evaluate(hyp, gt)
    assert r.totals["id_switches"] == 0 and r.totals["false_positives"] == 1


def test_empty_and_mismatched_traces():
    with pytest.raises(EvaluationError):
        evaluate([], [])
    with pytest.raises(EvaluationError):
        evaluate([{}], [{}, {}])
    with pytest.raises(EvaluationError):
        evaluate([{}], [{}], cutoff=0)
    assert math.isnan(evaluate([{}], [{}]).mota)


frames = st.lists(
    st.dictionaries(st.integers(0, 5), st.tuples(st.floats(-5, 5), st.floats(-5, 5)), max_size=4),
    min_size=1,
    max_size=8,
)


@given(frames, frames, st.permutations(list(range(6))), st.permutations(list(range(6))))
def test_relabeling_invariance(hyp, gt, ph, pg):
    n = min(len(hyp), len(gt))
    hyp, gt = hyp[:n], gt[:n]
    if not any(gt):
        return
    a = evaluate(hyp, gt)
    b = evaluate(
        [{ph[k] + 100: v for k, v in f.items()} for f in hyp],
        [{pg[k]: v for k, v in f.items()} for f in gt],
    )
    for key in ("mota", "motp"):
        assert np.isclose(getattr(a, key), getattr(b, key), equal_nan=True)
    assert a.totals == b.totals
