"""Scenario files: JSON schema, validation and parsing."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from ..intent import InferenceConfig, sample_goal_grid
from ..world import AgentState, GoalSet

CONFIG_ENV = "CFNAV_CONFIG_DIR"


class ScenarioError(ValueError):
    """Scenario failed validation; ``field`` names the offending entry."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


_vec2 = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_id = {"type": ["integer", "string"]}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}

SCHEMA = {
    "type": "object",
    "required": ["name", "duration", "step_dt", "goals", "agents"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "duration": _pos,
        "step_dt": _pos,
        "seed": {"type": "integer", "minimum": 0},
        "goals": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["points"],
                    "additionalProperties": False,
                    "properties": {"points": {"type": "array", "items": _vec2, "minItems": 1}, "ids": {"type": "array", "items": _id}},
                },
                {
                    "type": "object",
                    "required": ["grid"],
                    "additionalProperties": False,
                    "properties": {
                        "grid": {
                            "type": "object",
                            "required": ["bounds", "nx", "ny"],
                            "additionalProperties": False,
                            "properties": {
                                "bounds": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
                                "nx": {"type": "integer", "minimum": 1},
                                "ny": {"type": "integer", "minimum": 1},
                            },
                        }
                    },
                },
            ]
        },
        "agent_defaults": {"type": "object"},
        "agents": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "position", "behavior"],
                "additionalProperties": False,
                "properties": {
                    "id": _id,
                    "position": _vec2,
                    "velocity": _vec2,
                    "radius": _pos,
                    "pref_speed": _pos,
                    "max_speed": _pos,
                    "max_accel": _pos,
                    "appearance": {"type": "array", "items": {"type": "number"}},
                    "behavior": {
                        "type": "object",
                        "required": ["type"],
                        "additionalProperties": False,
                        "properties": {
                            "type": {"enum": ["scripted", "planner", "random"]},
                            "goals": {"type": "array", "items": _id, "minItems": 1},
                            "loop": {"type": "boolean"},
                            "arrival_radius": _pos,
                            "dwell": _nonneg,
                            "switch_rate": _nonneg,
                        },
                    },
                },
            },
        },
        "sensors": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "fov"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "pose": _vec2,
                    "fov": {"type": "array", "items": _vec2, "minItems": 3},
                    "noise": _nonneg,
                    "detection_rate": {"type": "number", "minimum": 0, "maximum": 1},
                    "false_positive_rate": _nonneg,
                    "appearance_noise": _nonneg,
                },
            },
        },
        "occlusions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["sensor", "agent", "start", "end"],
                "additionalProperties": False,
                "properties": {"sensor": {"type": "integer"}, "agent": _id, "start": _nonneg, "end": _nonneg},
            },
        },
        "network": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "latency": _nonneg,
                "jitter": _nonneg,
                "drop_prob": {"type": "number", "minimum": 0, "maximum": 1},
                "delta_t": _pos,
                "kill": {"type": "array", "items": {"type": "object", "required": ["node", "at"], "properties": {"node": {"type": "integer"}, "at": _nonneg}}},
                "revive": {"type": "array", "items": {"type": "object", "required": ["node", "at"], "properties": {"node": {"type": "integer"}, "at": _nonneg}}},
            },
        },
        "tracker": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_local": {"type": "integer", "minimum": 1},
                "n_global": {"type": "integer", "minimum": 1},
                "meas_sigma": _pos,
                "snap_to_detection": {"type": "boolean"},
                "velocity_smoothing": {"type": "number", "minimum": 0, "maximum": 1},
                "confirm_hits": {"type": "integer", "minimum": 1},
                "global_confirm_hits": {"type": "integer", "minimum": 1},
                "observer": {"type": "integer"},
            },
        },
        "inference": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sigma_min": _pos,
                "sigma_speed_frac": _nonneg,
                "floor_prob": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "grace_period": _nonneg,
            },
        },
    },
}

_AGENT_KEYS = ("radius", "pref_speed", "max_speed", "max_accel")


@dataclass(frozen=True)
class AgentSpec:
    state: AgentState
    behavior: dict
    appearance: np.ndarray | None


@dataclass(frozen=True)
class SensorSpec:
    id: int
    fov: np.ndarray
    noise: float = 0.05
    detection_rate: float = 1.0
    false_positive_rate: float = 0.0
    appearance_noise: float = 0.05


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    step_dt: float
    goals: GoalSet
    agents: tuple
    sensors: tuple = ()
    occlusions: tuple = ()
    network: dict = field(default_factory=dict)
    tracker: dict = field(default_factory=dict)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    seed: int = 0
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.step_dt))

    def agent_template(self) -> dict:
        """Kinematic parameters assumed for tracked objects of unknown identity."""
        d = self.raw.get("agent_defaults", {})
        return {k: float(d[k]) for k in _AGENT_KEYS if k in d}


def _path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


def validate(data: dict) -> None:
    """Raise :class:`ScenarioError` naming the first offending field."""
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        e = errors[0]
        # oneOf failures are opaque; point at the deepest sub-error instead
        if e.context:
            e = sorted(e.context, key=lambda c: -len(c.absolute_path))[0]
        raise ScenarioError(_path(e), e.message)
    if data["duration"] < data["step_dt"]:
        raise ScenarioError("duration", "must be >= step_dt")
    ids = [a["id"] for a in data["agents"]]
    if len(set(map(repr, ids))) != len(ids):
        raise ScenarioError("agents", "agent ids must be unique")
    sids = [s["id"] for s in data.get("sensors", [])]
    if len(set(sids)) != len(sids):
        raise ScenarioError("sensors", "sensor ids must be unique")
    goal_ids = _goal_ids(data["goals"])
    for i, a in enumerate(data["agents"]):
        for g in a["behavior"].get("goals", []):
            if g not in goal_ids:
                raise ScenarioError(f"agents.{i}.behavior.goals", f"unknown goal {g!r}")
        if a["behavior"]["type"] in ("scripted", "planner") and not a["behavior"].get("goals"):
            raise ScenarioError(f"agents.{i}.behavior.goals", "required for scripted and planner agents")
    for i, o in enumerate(data.get("occlusions", [])):
        if o["sensor"] not in sids:
            raise ScenarioError(f"occlusions.{i}.sensor", f"unknown sensor {o['sensor']}")
        if o["end"] < o["start"]:
            raise ScenarioError(f"occlusions.{i}.end", "must be >= start")


def _goal_ids(goals):
    if "grid" in goals:
        g = goals["grid"]
        return list(range(g["nx"] * g["ny"]))
    return list(goals.get("ids", range(len(goals["points"]))))


def _goalset(goals) -> GoalSet:
    if "grid" in goals:
        g = goals["grid"]
        return sample_goal_grid(g["bounds"], g["nx"], g["ny"])
    return GoalSet(goals["points"], goals.get("ids"))


def from_dict(data: dict) -> Scenario:
    validate(data)
    defaults = data.get("agent_defaults", {})
    agents = []
    for i, a in enumerate(data["agents"]):
        kw = {k: float(a.get(k, defaults.get(k))) for k in _AGENT_KEYS if k in a or k in defaults}
        try:
            state = AgentState(a["id"], a["position"], a.get("velocity", [0.0, 0.0]), **kw)
        except ValueError as exc:
            raise ScenarioError(f"agents.{i}", str(exc)) from None
        app = a.get("appearance")
        agents.append(AgentSpec(state, dict(a["behavior"]), None if app is None else np.asarray(app, dtype=np.float64)))
    sensors = []
    for s in data.get("sensors", []):
        sensors.append(
            SensorSpec(
                int(s["id"]),
                np.asarray(s["fov"], dtype=np.float64),
                float(s.get("noise", 0.05)),
                float(s.get("detection_rate", 1.0)),
                float(s.get("false_positive_rate", 0.0)),
                float(s.get("appearance_noise", 0.05)),
            )
        )
    inf = InferenceConfig(**data.get("inference", {}))
    try:
        goals = _goalset(data["goals"])
    except ValueError as exc:
        raise ScenarioError("goals", str(exc)) from None
    return Scenario(
        name=data["name"],
        duration=float(data["duration"]),
        step_dt=float(data["step_dt"]),
        goals=goals,
        agents=tuple(agents),
        sensors=tuple(sensors),
        occlusions=tuple(data.get("occlusions", [])),
        network=dict(data.get("network", {})),
        tracker=dict(data.get("tracker", {})),
        inference=inf,
        seed=int(data.get("seed", 0)),
        raw=data,
    )


def config_dir() -> Path | None:
    d = os.environ.get(CONFIG_ENV)
    return Path(d) if d else None


def find_scenario(name_or_path) -> Path:
    """Resolve a path, a name in ``$CFNAV_CONFIG_DIR`` or a shipped scenario name."""
    p = Path(name_or_path)
    if p.is_file():
        return p
    names = [p.name] if p.suffix == ".json" else [p.name + ".json", p.name]
    d = config_dir()
    if d is not None:
        for n in names:
            if (d / n).is_file():
                return d / n
    shipped = resources.files("cfnav") / "scenarios"
    for n in names:
        cand = shipped / n
        if cand.is_file():
            return Path(str(cand))
    raise FileNotFoundError(f"scenario {name_or_path!r} not found")


def load(name_or_path) -> Scenario:
    path = find_scenario(name_or_path)
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError("<root>", f"invalid JSON: {exc}") from None
    return from_dict(data)


def shipped_scenarios():
    root = resources.files("cfnav") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))
