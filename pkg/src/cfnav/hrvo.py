"""Hybrid reciprocal velocity obstacles and velocity selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from . import _hrvo_kernels as K
from .world import EPS, AgentState, WorldState, clamp_to_envelope


class DegenerateRegionError(ValueError):
    """Raised when two agents overlap and no velocity-obstacle cone exists."""


STATUS_NAMES = {
    K.STATUS_FREE: "free",
    K.STATUS_AVOIDING: "avoiding",
    K.STATUS_CONSTRAINED: "constrained",
}


@dataclass(frozen=True, eq=False)
class HrvoRegion:
    apex: np.ndarray
    left_leg: np.ndarray
    right_leg: np.ndarray
    source_agent: Hashable = None
    obstacle_agent: Hashable = None

    def contains(self, velocity, tol: float = K.INSIDE_TOL) -> bool:
        """Strict point-in-cone test; points on a leg are outside."""
        w = np.asarray(velocity, dtype=np.float64) - self.apex
        a = self.right_leg[0] * w[1] - self.right_leg[1] * w[0]
        b = w[0] * self.left_leg[1] - w[1] * self.left_leg[0]
        return bool(a > tol and b > tol)

    @property
    def half_angle(self) -> float:
        c = float(np.clip(np.dot(self.left_leg, self.right_leg), -1.0, 1.0))
        return 0.5 * math.acos(c)

    @property
    def axis(self) -> np.ndarray:
        m = self.left_leg + self.right_leg
        return m / np.hypot(*m)


@dataclass(frozen=True, eq=False)
class VelocityCandidate:
    velocity: np.ndarray
    feasible: bool
    dist_to_preferred: float
    status: str = "free"


@dataclass(frozen=True)
class HrvoConfig:
    neighbor_dist: float = 10.0
    max_neighbors: int = 10
    arrival_tol: float = 1e-6


def build_hrvo(agent: AgentState, other: AgentState) -> HrvoRegion:
    """Hybrid reciprocal velocity obstacle induced on ``agent`` by ``other``."""
    apex, left, right, overlap = K.hrvo_regions_np(
        agent.position,
        agent.velocity,
        agent.radius,
        other.position[None, :],
        other.velocity[None, :],
        np.array([other.radius]),
    )
    if overlap[0]:
        raise DegenerateRegionError(f"agents {agent.id!r} and {other.id!r} overlap")
    return HrvoRegion(apex[0], left[0], right[0], agent.id, other.id)


def preferred_velocity(agent: AgentState, goal, dt: float) -> np.ndarray:
    """Velocity toward ``goal`` at preferred speed, slowed to stop on the goal."""
    d = np.asarray(goal, dtype=np.float64) - agent.position
    dist = float(np.hypot(*d))
    if dist < EPS:
        return np.zeros(2)
    speed = min(agent.pref_speed, dist / dt)
    return d * (speed / dist)


def _region_arrays(obstacles: Sequence[HrvoRegion]):
    if not obstacles:
        z = np.zeros((0, 2))
        return z, z, z
    apex = np.array([r.apex for r in obstacles], dtype=np.float64)
    left = np.array([r.left_leg for r in obstacles], dtype=np.float64)
    right = np.array([r.right_leg for r in obstacles], dtype=np.float64)
    return apex, left, right


def select_velocity(
    agent: AgentState, goal, obstacles: Sequence[HrvoRegion], dt: float, backend=None
) -> VelocityCandidate:
    """Reachable velocity outside every region, closest to the preferred velocity.

    The reachable set is the disc of radius ``max_accel * dt`` around the
    current velocity intersected with the ``max_speed`` disc. When every
    reachable velocity is covered, the least-penetrating one is returned
    with status ``"constrained"`` instead of stopping the agent.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    pref = preferred_velocity(agent, goal, dt)
    apex, left, right = _region_arrays(obstacles)
    vx, vy, status = K.select_velocity_arrays(
        pref, agent.velocity, agent.max_speed, agent.max_accel * dt, apex, left, right, backend
    )
    v = np.array([vx, vy])
    return VelocityCandidate(
        velocity=v,
        feasible=status != K.STATUS_CONSTRAINED,
        dist_to_preferred=float(np.hypot(*(v - pref))),
        status=STATUS_NAMES[status],
    )


def neighbors(agent: AgentState, others: Sequence[AgentState], config: HrvoConfig = HrvoConfig()):
    """The ``max_neighbors`` closest other agents within ``neighbor_dist``."""
    scored = []
    for idx, o in enumerate(others):
        if o.id == agent.id:
            continue
        gap = float(np.hypot(*(o.position - agent.position))) - agent.radius - o.radius
        if gap <= config.neighbor_dist:
            scored.append((gap, idx, o))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [o for _, _, o in scored[: config.max_neighbors]]


def separation_velocity(agent: AgentState, intruder: AgentState, dt: float) -> np.ndarray:
    """Full-speed escape from an overlapping intruder, clipped to the envelope."""
    away = agent.position - intruder.position
    n = float(np.hypot(*away))
    if n < EPS:
        # coincident centres: step to the right of the current heading
        h = agent.velocity if np.hypot(*agent.velocity) > EPS else np.array([1.0, 0.0])
        away = np.array([h[1], -h[0]])
        n = float(np.hypot(*away))
    target = away / n * agent.max_speed
    v, _ = clamp_to_envelope(target, agent.velocity, agent.max_speed, agent.max_accel * dt)
    return v


def plan_arrays(agent: AgentState, others: Sequence[AgentState], config: HrvoConfig = HrvoConfig(), backend=None):
    """Region arrays for ``agent`` against its neighbours.

    Returns ``(apex, left, right, intruder)``; ``intruder`` is the closest
    overlapping neighbour or ``None``.
    """
    near = neighbors(agent, others, config)
    if not near:
        z = np.zeros((0, 2))
        return z, z, z, None
    apex, left, right, overlap = K.hrvo_regions(
        agent.position,
        agent.velocity,
        agent.radius,
        np.array([o.position for o in near]),
        np.array([o.velocity for o in near]),
        np.array([o.radius for o in near]),
        backend,
    )
    intruder = near[int(np.flatnonzero(overlap)[0])] if overlap.any() else None
    return apex, left, right, intruder


def plan_velocity(
    agent: AgentState,
    goal,
    others: Sequence[AgentState],
    dt: float,
    config: HrvoConfig = HrvoConfig(),
    backend=None,
) -> VelocityCandidate:
    """One planning step for ``agent`` among ``others``, with the overlap fallback."""
    apex, left, right, intruder = plan_arrays(agent, others, config, backend)
    if intruder is not None:
        v = separation_velocity(agent, intruder, dt)
        pref = preferred_velocity(agent, goal, dt)
        return VelocityCandidate(v, False, float(np.hypot(*(v - pref))), "separating")
    pref = preferred_velocity(agent, goal, dt)
    vx, vy, status = K.select_velocity_arrays(
        pref, agent.velocity, agent.max_speed, agent.max_accel * dt, apex, left, right, backend
    )
    v = np.array([vx, vy])
    return VelocityCandidate(v, status != K.STATUS_CONSTRAINED, float(np.hypot(*(v - pref))), STATUS_NAMES[status])


def hrvo_step(
    world: WorldState,
    goal_points: Mapping[Hashable, Sequence[float]],
    dt: float,
    config: HrvoConfig = HrvoConfig(),
    backend=None,
):
    """Velocity commands for every agent that has an entry in ``goal_points``.

    All agents plan simultaneously from the same snapshot.
    Returns ``(commands, statuses)``.
    """
    commands = {}
    statuses = {}
    for a in world.agents:
        if a.id not in goal_points:
            continue
        cand = plan_velocity(a, goal_points[a.id], world.agents, dt, config, backend)
        commands[a.id] = cand.velocity
        statuses[a.id] = cand.status
    return commands, statuses
