"""Ground-truth world state, agent kinematics and deterministic stepping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Hashable, Mapping, Sequence

import numpy as np

EPS = 1e-9


class UnknownIdentifierError(KeyError):
    """An agent or goal identifier that the world does not know about."""


def _vec(value, name):
    arr = np.array(value, dtype=np.float64).reshape(-1)
    if arr.shape != (2,):
        raise ValueError(f"{name} must be a 2D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AgentState:
    id: Hashable
    position: np.ndarray
    velocity: np.ndarray
    radius: float = 0.4
    pref_speed: float = 1.0
    max_speed: float = 1.5
    max_accel: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "position", _vec(self.position, "position"))
        object.__setattr__(self, "velocity", _vec(self.velocity, "velocity"))
        if not self.radius > 0:
            raise ValueError(f"agent {self.id!r}: radius must be > 0")
        if not 0 < self.pref_speed <= self.max_speed:
            raise ValueError(f"agent {self.id!r}: need 0 < pref_speed <= max_speed")
        if not self.max_accel > 0:
            raise ValueError(f"agent {self.id!r}: max_accel must be > 0")
        if float(np.hypot(*self.velocity)) > self.max_speed + EPS:
            raise ValueError(f"agent {self.id!r}: |velocity| exceeds max_speed")

    def with_motion(self, position=None, velocity=None) -> "AgentState":
        return replace(
            self,
            position=self.position if position is None else position,
            velocity=self.velocity if velocity is None else velocity,
        )

    def __eq__(self, other):
        if not isinstance(other, AgentState):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.position, other.position)
            and np.array_equal(self.velocity, other.velocity)
            and (self.radius, self.pref_speed, self.max_speed, self.max_accel)
            == (other.radius, other.pref_speed, other.max_speed, other.max_accel)
        )


class GoalSet:
    """Ordered, immutable set of candidate navigation goals."""

    def __init__(self, points, ids: Sequence[Hashable] | None = None):
        pts = np.array(points, dtype=np.float64).reshape(-1, 2)
        if len(pts) == 0:
            raise ValueError("goal set must be non-empty")
        if not np.all(np.isfinite(pts)):
            raise ValueError("goal coordinates must be finite")
        ids = list(range(len(pts))) if ids is None else list(ids)
        if len(ids) != len(pts):
            raise ValueError("one identifier per goal required")
        if len(set(ids)) != len(ids):
            raise ValueError("goal identifiers must be unique")
        pts.setflags(write=False)
        self.points = pts
        self.ids = tuple(ids)
        self._index = {g: i for i, g in enumerate(self.ids)}

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)

    def __contains__(self, goal_id):
        return goal_id in self._index

    def index(self, goal_id) -> int:
        try:
            return self._index[goal_id]
        except KeyError:
            raise UnknownIdentifierError(f"unknown goal {goal_id!r}") from None

    def point(self, goal_id) -> np.ndarray:
        return self.points[self.index(goal_id)]

    def __repr__(self):
        return f"GoalSet({len(self)} goals)"


@dataclass(frozen=True)
class MotionParams:
    avg_speed: float = 0.0
    max_observed_speed: float = 0.0
    max_observed_accel: float = 0.0
    samples: int = 0


def update_motion_params(
    params: MotionParams, observed_velocity, prev_velocity, dt: float, decay: float = 0.9
) -> MotionParams:
    """Fold one velocity observation into the running motion parameters.

    Average speed is an exponential moving average; the other two fields are
    running maxima and never decrease.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if not 0.0 <= decay < 1.0:
        raise ValueError("decay must lie in [0, 1)")
    vx, vy = float(observed_velocity[0]), float(observed_velocity[1])
    px, py = float(prev_velocity[0]), float(prev_velocity[1])
    if not all(math.isfinite(x) for x in (vx, vy, px, py, dt)):
        raise ValueError("motion observations must be finite")
    speed = math.hypot(vx, vy)
    accel = math.hypot(vx - px, vy - py) / dt
    return MotionParams(
        avg_speed=decay * params.avg_speed + (1.0 - decay) * speed,
        max_observed_speed=max(params.max_observed_speed, speed),
        max_observed_accel=max(params.max_observed_accel, accel),
        samples=params.samples + 1,
    )


def clamp_to_envelope(command, current, max_speed: float, max_dv: float):
    """Closest velocity to ``command`` inside the reachable envelope.

    The envelope is the intersection of the acceleration disc around
    ``current`` (radius ``max_dv``) and the speed disc of radius
    ``max_speed``. Returns ``(velocity, clamped)``.
    """
    cx, cy = float(command[0]), float(command[1])
    ux, uy = float(current[0]), float(current[1])
    in_accel = math.hypot(cx - ux, cy - uy) <= max_dv + EPS
    in_speed = math.hypot(cx, cy) <= max_speed + EPS
    if in_accel and in_speed:
        return np.array([cx, cy]), False

    if not in_accel:
        d = math.hypot(cx - ux, cy - uy)
        ax, ay = ux + (cx - ux) * max_dv / d, uy + (cy - uy) * max_dv / d
    else:
        ax, ay = cx, cy
    if math.hypot(ax, ay) <= max_speed + EPS:
        return np.array([ax, ay]), True

    s = math.hypot(cx, cy)
    if s < EPS:
        bx, by = 0.0, 0.0
    else:
        bx, by = cx * max_speed / s, cy * max_speed / s
    if math.hypot(bx - ux, by - uy) <= max_dv + EPS:
        return np.array([bx, by]), True

    # Optimum sits on both boundary circles.
    d = math.hypot(ux, uy)
    if d < EPS or d > max_speed + max_dv or d < abs(max_speed - max_dv):
        return np.array([bx, by]), True
    a = (max_dv * max_dv - max_speed * max_speed + d * d) / (2.0 * d)
    h = math.sqrt(max(max_dv * max_dv - a * a, 0.0))
    ex, ey = -ux / d, -uy / d
    mx, my = ux + a * ex, uy + a * ey
    p1 = np.array([mx - h * ey, my + h * ex])
    p2 = np.array([mx + h * ey, my - h * ex])
    c = np.array([cx, cy])
    if np.hypot(*(p1 - c)) <= np.hypot(*(p2 - c)):
        return p1, True
    return p2, True


@dataclass(frozen=True)
class WorldState:
    time: float
    agents: tuple[AgentState, ...]
    goal_assignment: Mapping[Hashable, Hashable] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValueError("agent identifiers must be unique")
        object.__setattr__(self, "goal_assignment", dict(self.goal_assignment))

    @property
    def agent_ids(self):
        return [a.id for a in self.agents]

    def agent(self, agent_id) -> AgentState:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise UnknownIdentifierError(f"unknown agent {agent_id!r}")


def step_world(world: WorldState, dt: float, commands: Mapping[Hashable, Sequence[float]]):
    """Advance the world by one explicit Euler step.

    Agents without a command keep their current velocity. Commands outside
    an agent's speed/acceleration envelope are clamped and reported.

    Returns ``(next_world, diagnostics)``.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    known = {a.id for a in world.agents}
    for agent_id in commands:
        if agent_id not in known:
            raise UnknownIdentifierError(f"command for unknown agent {agent_id!r}")

    diagnostics = []
    agents = []
    for a in world.agents:
        if a.id in commands:
            requested = np.asarray(commands[a.id], dtype=np.float64)
            v, clamped = clamp_to_envelope(requested, a.velocity, a.max_speed, a.max_accel * dt)
            if clamped:
                diagnostics.append(
                    {
                        "kind": "clamped",
                        "agent": a.id,
                        "requested": [float(requested[0]), float(requested[1])],
                        "applied": [float(v[0]), float(v[1])],
                    }
                )
        else:
            v = a.velocity
        agents.append(a.with_motion(position=a.position + v * dt, velocity=v))
    return WorldState(world.time + dt, tuple(agents), world.goal_assignment), diagnostics
