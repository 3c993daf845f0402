"""Counterfactual goal inference.

For every tracked agent and every candidate goal, one HRVO step is
simulated from the previous snapshot with that goal imposed on the agent.
The simulated velocity is the mean of an isotropic bivariate normal; the
density of the observed velocity under it is the goal likelihood, folded
into a recursive posterior over goals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from . import _hrvo_kernels as K
from ._accel import pick
from .hrvo import HrvoConfig, plan_velocity
from .world import (
    EPS,
    AgentState,
    GoalSet,
    MotionParams,
    UnknownIdentifierError,
    WorldState,
    update_motion_params,
)


class ModelError(ValueError):
    """Invalid likelihood model (e.g. covariance not SPD)."""


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class InferenceConfig:
    sigma_min: float = 0.15
    sigma_speed_frac: float = 0.25
    floor_prob: float = 1e-3
    grace_period: float = 2.0
    ema_decay: float = 0.9
    hrvo: HrvoConfig = field(default_factory=HrvoConfig)
    backend: str | None = None


@dataclass(frozen=True, eq=False)
class GoalBelief:
    agent: Hashable
    goal_ids: tuple
    probs: np.ndarray
    last_seen: float = 0.0

    @property
    def posterior(self) -> dict:
        return {g: float(p) for g, p in zip(self.goal_ids, self.probs)}

    def argmax(self):
        return self.goal_ids[int(np.argmax(self.probs))]

    def prob(self, goal_id) -> float:
        return float(self.probs[self.goal_ids.index(goal_id)])

    @classmethod
    def uniform(cls, agent, goal_ids, last_seen=0.0):
        n = len(goal_ids)
        return cls(agent, tuple(goal_ids), np.full(n, 1.0 / n), last_seen)


@dataclass(frozen=True)
class CounterfactualResult:
    agent: Hashable
    goal: Hashable
    simulated_velocity: np.ndarray


@dataclass(frozen=True, eq=False)
class LikelihoodModel:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(2)
        cov = np.asarray(self.covariance, dtype=np.float64).reshape(2, 2)
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise ModelError("covariance must be symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ModelError("covariance must be positive definite") from None
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def isotropic(cls, mean, sigma: float):
        return cls(mean, np.eye(2) * sigma * sigma)


def likelihood(observed, model: LikelihoodModel) -> float:
    """Bivariate normal density of ``observed`` under ``model``."""
    d = np.asarray(observed, dtype=np.float64) - model.mean
    cov = model.covariance
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    inv = np.array([[cov[1, 1], -cov[0, 1]], [-cov[1, 0], cov[0, 0]]]) / det
    m = float(d @ inv @ d)
    return math.exp(-0.5 * m) / (2.0 * math.pi * math.sqrt(det))


def apply_floor(probs, floor: float) -> np.ndarray:
    """Renormalise ``probs`` so that every entry is at least ``floor``.

    Entries that would fall below the floor are pinned to it; the rest keep
    their ratios and share the remaining mass. Works row-wise on 2D input.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim == 1:
        return apply_floor(p[None, :], floor)[0]
    n = p.shape[1]
    if floor <= 0.0:
        return p / p.sum(axis=1, keepdims=True)
    if floor * n > 1.0 + 1e-12:
        raise ConfigurationError(f"floor {floor} too large for {n} goals")
    pinned = np.zeros(p.shape, dtype=bool)
    while True:
        mass = 1.0 - floor * pinned.sum(axis=1, keepdims=True)
        s = np.where(pinned, 0.0, p).sum(axis=1, keepdims=True)
        dead = s[:, 0] <= 0.0
        scale = mass / np.where(s <= 0.0, 1.0, s)
        out = np.where(pinned, floor, p * scale)
        if dead.any():
            n_free = (~pinned[dead]).sum(axis=1, keepdims=True)
            out[dead] = np.where(pinned[dead], floor, mass[dead] / np.maximum(n_free, 1))
        low = ~pinned & (out < floor)
        if not low.any():
            return out
        pinned |= low


def _posterior_from_log(prior, loglik, floor):
    logp = np.log(np.maximum(prior, 1e-300)) + loglik
    logp -= logp.max(axis=-1, keepdims=True)
    post = np.exp(logp)
    post /= post.sum(axis=-1, keepdims=True)
    return apply_floor(post, floor)


def update_belief(prior: GoalBelief, likelihoods: Mapping[Hashable, float], floor: float = 1e-3):
    """Bayes update of ``prior`` by per-goal likelihoods.

    Returns ``(posterior, diagnostics)``. When every likelihood is zero the
    prior is returned unchanged with an ``uninformative`` diagnostic.
    """
    try:
        lik = np.array([float(likelihoods[g]) for g in prior.goal_ids])
    except KeyError as exc:
        raise UnknownIdentifierError(f"no likelihood for goal {exc.args[0]!r}") from None
    if np.any(lik < 0) or not np.all(np.isfinite(lik)):
        raise ValueError("likelihoods must be finite and non-negative")
    if not np.any(lik > 0):
        return prior, [{"kind": "uninformative", "agent": prior.agent}]
    post = lik * prior.probs
    post = post / post.sum()
    post = apply_floor(post, floor)
    return GoalBelief(prior.agent, prior.goal_ids, post, prior.last_seen), []


@dataclass(frozen=True, eq=False)
class InferenceSnapshot:
    time: float
    beliefs: dict = field(default_factory=dict)
    likelihoods: dict = field(default_factory=dict)
    agents: dict = field(default_factory=dict)
    motion: dict = field(default_factory=dict)
    n_simulations: int = 0
    diagnostics: list = field(default_factory=list)

    @classmethod
    def empty(cls, time: float = 0.0):
        return cls(time=time)


def sigma_for(params: MotionParams | None, config: InferenceConfig) -> float:
    avg = params.avg_speed if params is not None else 0.0
    return max(config.sigma_min, config.sigma_speed_frac * avg)


def counterfactual_step(
    world: WorldState,
    agent_id,
    goal_id,
    goals: GoalSet,
    dt: float,
    beliefs: Mapping[Hashable, GoalBelief] | None = None,
    config: InferenceConfig = InferenceConfig(),
) -> CounterfactualResult:
    """Simulate one step of ``world`` with ``goal_id`` imposed on ``agent_id``.

    The copy keeps every other agent on its most probable goal. Only the
    target's new velocity is needed: in a single simultaneous step the other
    agents' goals do not enter the target's velocity obstacles.
    """
    target = world.agent(agent_id)
    goal_point = goals.point(goal_id)
    assignment = dict(world.goal_assignment)
    for other in world.agents:
        if other.id != agent_id and beliefs and other.id in beliefs:
            assignment[other.id] = beliefs[other.id].argmax()
    assignment[agent_id] = goal_id
    sim = WorldState(world.time, world.agents, assignment)
    cand = plan_velocity(target, goal_point, sim.agents, dt, config.hrvo, config.backend)
    return CounterfactualResult(agent_id, goal_id, cand.velocity)


def preferred_velocities(pos, pref_speed, goal_points, dt):
    d = goal_points - pos
    dist = np.hypot(d[:, 0], d[:, 1])
    speed = np.minimum(pref_speed, dist / dt)
    safe = np.where(dist < EPS, 1.0, dist)
    out = d * (speed / safe)[:, None]
    out[dist < EPS] = 0.0
    return out


def _neighbor_table(P, R, config: HrvoConfig):
    """Neighbour indices per agent (-1 padded), matching :func:`cfnav.hrvo.neighbors`."""
    n = len(P)
    width = max(1, min(config.max_neighbors, n - 1))
    table = np.full((n, width), -1, dtype=np.int64)
    if n < 2:
        return table
    diff = P[None, :, :] - P[:, None, :]
    gap = np.hypot(diff[..., 0], diff[..., 1]) - R[:, None] - R[None, :]
    np.fill_diagonal(gap, np.inf)
    order = np.argsort(gap, axis=1, kind="stable")[:, :width]
    ok = np.take_along_axis(gap, order, axis=1) <= config.neighbor_dist
    table[ok] = order[ok]
    return table


def counterfactual_velocities(
    agents: Sequence[AgentState], goals: GoalSet, dt: float, config=InferenceConfig(), which=None
):
    """Simulated velocity of each listed agent toward every goal, shape (len(which), g, 2).

    Batched form of :func:`counterfactual_step` over a whole snapshot;
    ``which`` defaults to every agent.
    """
    n = len(agents)
    which = np.arange(n, dtype=np.int64) if which is None else np.asarray(which, dtype=np.int64)
    if n == 0 or len(which) == 0:
        return np.zeros((len(which), len(goals), 2))
    P = np.array([a.position for a in agents])
    V = np.array([a.velocity for a in agents])
    R = np.array([a.radius for a in agents], dtype=np.float64)
    pref = np.array([a.pref_speed for a in agents], dtype=np.float64)
    vmax = np.array([a.max_speed for a in agents], dtype=np.float64)
    amax = np.array([a.max_accel for a in agents], dtype=np.float64)
    nbr = _neighbor_table(P, R, config.hrvo)
    batch = pick(K.counterfactual_batch_nb, K.counterfactual_batch_np, config.backend)
    return batch(P, V, R, pref, vmax, amax, nbr, which, np.ascontiguousarray(goals.points), float(dt))


def infer_all(
    prev: InferenceSnapshot,
    observations: Sequence[AgentState],
    goals: GoalSet,
    dt: float,
    time: float | None = None,
    config: InferenceConfig = InferenceConfig(),
) -> InferenceSnapshot:
    """One inference iteration over every observed agent."""
    if goals is None or len(goals) == 0:
        raise ConfigurationError("goal set is empty")
    now = prev.time + dt if time is None else float(time)
    observed = {a.id: a for a in observations}
    if len(observed) != len(observations):
        raise ValueError("duplicate agent identifiers in observations")

    # agents with a state at t-1 and a belief over the current goal set
    prev_agents = list(prev.agents.values())
    prev_index = {a.id: i for i, a in enumerate(prev_agents)}
    active = [
        aid
        for aid in observed
        if aid in prev_index and aid in prev.beliefs and prev.beliefs[aid].goal_ids == goals.ids
    ]
    sim_v = None
    if active:
        sim_v = counterfactual_velocities(prev_agents, goals, dt, config, [prev_index[a] for a in active])

    beliefs = {}
    likelihoods = {}
    motion = {}
    diagnostics = []
    updates = []
    for aid, obs in observed.items():
        params = prev.motion.get(aid, MotionParams())
        if aid in prev_index:
            params = update_motion_params(params, obs.velocity, prev_agents[prev_index[aid]].velocity, dt, config.ema_decay)
        motion[aid] = params

        prior = prev.beliefs.get(aid)
        if prior is None or prior.goal_ids != goals.ids:
            beliefs[aid] = GoalBelief.uniform(aid, goals.ids, now)
        elif aid not in prev_index:
            beliefs[aid] = GoalBelief(aid, prior.goal_ids, prior.probs, now)
        else:
            updates.append(aid)

    if updates:
        sigma = np.array([sigma_for(motion[aid], config) for aid in updates])
        obs_v = np.array([observed[aid].velocity for aid in updates])
        d = sim_v - obs_v[:, None, :]
        var = (sigma * sigma)[:, None]
        loglik = -0.5 * (d[..., 0] ** 2 + d[..., 1] ** 2) / var - np.log(2.0 * math.pi * var)
        priors = np.array([prev.beliefs[aid].probs for aid in updates])
        post = _posterior_from_log(priors, loglik, config.floor_prob)
        dens = np.exp(loglik)
        for r, aid in enumerate(updates):
            beliefs[aid] = GoalBelief(aid, goals.ids, post[r], now)
            for g, v in zip(goals.ids, dens[r]):
                likelihoods[(aid, g)] = float(v)
    n_sim = len(updates) * len(goals)

    for aid, b in prev.beliefs.items():
        if aid in observed:
            continue
        if now - b.last_seen <= config.grace_period + EPS:
            beliefs[aid] = b
            if aid in prev.motion:
                motion[aid] = prev.motion[aid]
        else:
            diagnostics.append({"kind": "dropped", "agent": aid})

    return InferenceSnapshot(
        time=now,
        beliefs=beliefs,
        likelihoods=likelihoods,
        agents=dict(observed),
        motion=motion,
        n_simulations=n_sim,
        diagnostics=diagnostics,
    )


def sample_goal_grid(bounds, nx: int, ny: int) -> GoalSet:
    """Cell-centred ``nx`` by ``ny`` goal grid over ``(xmin, ymin, xmax, ymax)``."""
    xmin, ymin, xmax, ymax = (float(b) for b in bounds)
    if nx < 1 or ny < 1:
        raise ValueError("grid needs nx, ny >= 1")
    if not (xmax > xmin and ymax > ymin):
        raise ValueError("bounds must be non-degenerate")
    xs = xmin + (np.arange(nx) + 0.5) * (xmax - xmin) / nx
    ys = ymin + (np.arange(ny) + 0.5) * (ymax - ymin) / ny
    gx, gy = np.meshgrid(xs, ys)
    return GoalSet(np.column_stack([gx.ravel(), gy.ravel()]))
