import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cfnav.intent import (
    ConfigurationError,
    GoalBelief,
    InferenceConfig,
    InferenceSnapshot,
    LikelihoodModel,
    ModelError,
    apply_floor,
    counterfactual_step,
    counterfactual_velocities,
    infer_all,
    likelihood,
    sample_goal_grid,
    update_belief,
)
from cfnav.world import AgentState, GoalSet, UnknownIdentifierError, WorldState
from oracles import gaussian_density

FLOOR = 1e-3


def test_counterfactual_unobstructed():
    w = WorldState(0.0, (AgentState(0, (0, 0), (1, 0)),), {})
    goals = GoalSet([[10, 0], [0, 10]])
    r = counterfactual_step(w, 0, 0, goals, 0.1)
    np.testing.assert_allclose(r.simulated_velocity, (1, 0))


def test_counterfactual_at_goal_is_zero():
    w = WorldState(0.0, (AgentState(0, (3, 4), (0, 0)),), {})
    goals = GoalSet([[3, 4]])
    np.testing.assert_array_equal(counterfactual_step(w, 0, 0, goals, 0.1).simulated_velocity, (0, 0))


def test_counterfactual_does_not_mutate_and_checks_ids():
    a = AgentState(0, (0, 0), (0.5, 0))
    w = WorldState(0.0, (a, AgentState(1, (2, 0), (-0.5, 0))), {0: 0})
    goals = GoalSet([[10, 0], [0, 10]])
    counterfactual_step(w, 0, 1, goals, 0.1)
    assert w.goal_assignment == {0: 0} and w.agent(0) == a
    with pytest.raises(UnknownIdentifierError):
        counterfactual_step(w, 9, 0, goals, 0.1)
    with pytest.raises(UnknownIdentifierError):
        counterfactual_step(w, 0, 9, goals, 0.1)


def test_batched_matches_single_counterfactual():
    rng = np.random.default_rng(3)
    agents = [AgentState(i, (2.0 * i, rng.uniform(-1, 1)), rng.uniform(-0.5, 0.5, 2)) for i in range(6)]
    goals = GoalSet([[0, 5], [10, 5], [5, -5]])
    w = WorldState(0.0, tuple(agents), {})
    batch = counterfactual_velocities(agents, goals, 0.1)
    for i, a in enumerate(agents):
        for gi, g in enumerate(goals.ids):
            single = counterfactual_step(w, a.id, g, goals, 0.1).simulated_velocity
            np.testing.assert_allclose(batch[i, gi], single, atol=1e-12)


def test_likelihood_peak():
    m = LikelihoodModel.isotropic((0.3, -0.2), 0.15)
    assert likelihood((0.3, -0.2), m) == pytest.approx(1 / (2 * math.pi * 0.0225), rel=1e-12)
    assert likelihood((0.3, -0.2), m) == pytest.approx(7.0736, abs=1e-4)
    assert likelihood((1e3, 1e3), m) == 0.0
    assert likelihood((0.5, -0.2), m) == pytest.approx(likelihood((0.3, 0.0), m), rel=1e-12)


def test_likelihood_full_covariance_against_oracle():
    cov = np.array([[0.04, 0.01], [0.01, 0.02]])
    m = LikelihoodModel((0, 0), cov)
    x = np.array([0.1, -0.05])
    ref = math.exp(-0.5 * x @ np.linalg.inv(cov) @ x) / (2 * math.pi * math.sqrt(np.linalg.det(cov)))
    assert likelihood(x, m) == pytest.approx(ref, rel=1e-12)
    with pytest.raises(ModelError):
        LikelihoodModel((0, 0), [[1, 2], [2, 1]])
    with pytest.raises(ModelError):
        LikelihoodModel((0, 0), [[1, 0.5], [0.4, 1]])


def test_update_belief_examples():
    prior = GoalBelief.uniform(0, (0, 1, 2))
    post, _ = update_belief(prior, {0: 0.6, 1: 0.3, 2: 0.1}, floor=0.0)
    np.testing.assert_allclose(post.probs, (0.6, 0.3, 0.1), atol=1e-12)
    same, _ = update_belief(prior, {0: 2.0, 1: 2.0, 2: 2.0})
    np.testing.assert_allclose(same.probs, prior.probs, atol=1e-15)
    unchanged, diags = update_belief(prior, {0: 0.0, 1: 0.0, 2: 0.0})
    assert unchanged is prior and diags[0]["kind"] == "uninformative"
    with pytest.raises(UnknownIdentifierError):
        update_belief(prior, {0: 1.0})


def test_update_belief_converges_to_floor_complement():
    b = GoalBelief(0, (0, 1, 2), np.array([0.98, 0.01, 0.01]))
    last = b.prob(0)
    for _ in range(60):
        b, _ = update_belief(b, {0: 2.0, 1: 1.0, 2: 1.0}, floor=FLOOR)
        assert b.prob(0) >= last - 1e-15
        last = b.prob(0)
    assert last == pytest.approx(1 - 2 * FLOOR, abs=1e-12)


probs = st.lists(st.floats(0, 1), min_size=2, max_size=12).filter(lambda p: sum(p) > 1e-6)


@given(probs, st.floats(0, 0.05))
def test_floor_properties(p, floor):
    p = np.array(p) / sum(p)
    if floor * len(p) > 1:
        with pytest.raises(ConfigurationError):
            apply_floor(p, floor)
        return
    out = apply_floor(p, floor)
    assert abs(out.sum() - 1) <= 1e-9
    assert np.all(out >= floor - 1e-12)
    # untouched entries keep their ratios
    free = out > floor + 1e-12
    if free.sum() >= 2:
        r = p[free] / out[free]
        np.testing.assert_allclose(r, r[0], rtol=1e-9)


@given(st.lists(st.floats(1e-6, 50), min_size=3, max_size=3), st.integers(1, 40))
def test_posterior_normalisation(lik, n):
    b = GoalBelief.uniform(0, (0, 1, 2))
    for _ in range(n):
        b, _ = update_belief(b, dict(enumerate(lik)), floor=FLOOR)
        assert abs(b.probs.sum() - 1.0) <= 1e-9
        assert np.all(b.probs >= FLOOR - 1e-15)


def test_infer_all_first_snapshot_uniform():
    agents = [AgentState(i, (2.0 * i, 0), (0, 0)) for i in range(5)]
    goals = GoalSet([[0, 10], [10, 10], [5, -10]])
    s = infer_all(InferenceSnapshot.empty(), agents, goals, 0.1)
    for b in s.beliefs.values():
        np.testing.assert_array_equal(b.probs, np.full(3, 1 / 3))
    assert s.n_simulations == 0
    s2 = infer_all(s, agents, goals, 0.1)
    assert s2.n_simulations == 15
    assert len(s2.likelihoods) == 15


def test_infer_all_empty_goals():
    with pytest.raises(ConfigurationError):
        infer_all(InferenceSnapshot.empty(), [], None, 0.1)


def test_stationary_symmetric_stays_uniform():
    a = AgentState(0, (0, 0), (0, 0))
    ang = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
    goals = GoalSet(np.column_stack([20 * np.cos(ang), 20 * np.sin(ang)]))
    s = InferenceSnapshot.empty()
    for _ in range(20):
        s = infer_all(s, [a], goals, 0.1)
    np.testing.assert_allclose(s.beliefs[0].probs, np.full(3, 1 / 3), atol=1e-6)


def test_likelihood_values_match_gaussian_oracle():
    prev = [AgentState(0, (0, 0), (0, 0))]
    goals = GoalSet([[10, 0], [0, 10]])
    s = infer_all(InferenceSnapshot.empty(), prev, goals, 0.1)
    obs = [AgentState(0, (0.0, 0.0), (0.15, 0.05))]
    s2 = infer_all(s, obs, goals, 0.1)
    sim = counterfactual_velocities(prev, goals, 0.1)[0]
    sigma = max(0.15, 0.25 * s2.motion[0].avg_speed)
    for gi, g in enumerate(goals.ids):
        ref = gaussian_density(obs[0].velocity, sim[gi], sigma**2)
        assert s2.likelihoods[(0, g)] == pytest.approx(ref, rel=1e-9)


@given(st.floats(0, 2 * np.pi), st.floats(4.0, 10.0))
def test_scripted_agent_argmax_within_five(theta, sep_sigmas):
    # goals far enough apart that their counterfactual velocities differ by >= 4 sigma
    sigma = 0.15
    dt = 0.1
    true_dir = np.array([math.cos(theta), math.sin(theta)])
    other = theta + 2 * math.asin(min(1.0, sep_sigmas * sigma / 2.0))
    goals = GoalSet([20 * true_dir, 20 * np.array([math.cos(other), math.sin(other)])])
    a = AgentState(0, (0, 0), (0, 0), max_accel=20.0)
    s = infer_all(InferenceSnapshot.empty(), [a], goals, dt)
    hit = None
    for k in range(1, 6):
        v = true_dir * a.pref_speed
        a = a.with_motion(position=a.position + v * dt, velocity=v)
        s = infer_all(s, [a], goals, dt)
        if s.beliefs[0].argmax() == 0:
            hit = k
            break
    assert hit is not None


def test_unseen_agent_grace_then_drop():
    goals = GoalSet([[10, 0], [0, 10]])
    a = AgentState(0, (0, 0), (0, 0))
    b = AgentState(1, (3, 0), (0, 0))
    s = infer_all(InferenceSnapshot.empty(), [a, b], goals, 0.1, time=0.0)
    s = infer_all(s, [a], goals, 0.1, time=1.0)
    assert 1 in s.beliefs
    s = infer_all(s, [a], goals, 0.1, time=2.0)
    assert 1 in s.beliefs
    s = infer_all(s, [a], goals, 0.1, time=2.2)
    assert 1 not in s.beliefs
    assert any(d["kind"] == "dropped" and d["agent"] == 1 for d in s.diagnostics)


@given(st.integers(1, 12), st.integers(1, 6))
def test_simulation_count_scaling(n_agents, n_goals):
    agents = [AgentState(i, (1.5 * i, 0), (0, 0)) for i in range(n_agents)]
    goals = GoalSet([[3 * k, 8] for k in range(n_goals)])
    s = infer_all(InferenceSnapshot.empty(), agents, goals, 0.1)
    s = infer_all(s, agents, goals, 0.1)
    assert s.n_simulations == n_agents * n_goals


def test_goal_grid_examples():
    g = sample_goal_grid((0, 0, 10, 5), 10, 10)
    assert len(g) == 100
    xs, ys = np.unique(g.points[:, 0]), np.unique(g.points[:, 1])
    np.testing.assert_allclose(np.diff(xs), 1.0)
    np.testing.assert_allclose(np.diff(ys), 0.5)
    one = sample_goal_grid((0, 0, 4, 2), 1, 1)
    np.testing.assert_allclose(one.points, [[2, 1]])
    four = sample_goal_grid((0, 0, 1, 1), 2, 2)
    np.testing.assert_allclose(sorted(map(tuple, four.points)), [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)])
    with pytest.raises(ValueError):
        sample_goal_grid((0, 0, 0, 1), 2, 2)


def test_backends_agree():
    rng = np.random.default_rng(0)
    agents = [AgentState(i, (1.2 * (i % 4), 1.2 * (i // 4)), rng.uniform(-0.6, 0.6, 2)) for i in range(12)]
    goals = GoalSet([[0, 8], [8, 8], [4, -4]])
    a = counterfactual_velocities(agents, goals, 0.1, InferenceConfig(backend="numba"))
    b = counterfactual_velocities(agents, goals, 0.1, InferenceConfig(backend="numpy"))
    np.testing.assert_allclose(a, b, atol=1e-9)
