"""End-to-end scenario execution: world, sensors, trackers, network, inference."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..hrvo import HrvoConfig, plan_velocity, preferred_velocity
from ..motmetrics import evaluate
from ..intent import InferenceSnapshot, infer_all
from ..netsim import LinkModel, MessageBus
from ..tracking.filter import TrackerConfig
from ..tracking.node import TrackerNode
from ..tracking.tracks import AssocConfig
from ..world import AgentState, WorldState, step_world
from .scenario import Scenario
from .sensors import simulate_sensors

MODES = ("inference-only", "full-pipeline")


@dataclass
class RunResult:
    scenario: str
    mode: str
    seed: int
    records: list = field(default_factory=list)
    truth: list = field(default_factory=list)
    node_tracks: dict = field(default_factory=dict)  # node -> [TrackSet | None per step]
    snapshots: list = field(default_factory=list)
    events: list = field(default_factory=list)
    network: dict = field(default_factory=dict)

    @property
    def times(self):
        return [r["t"] for r in self.records]


class _Behavior:
    def __init__(self, spec, goals, rng):
        b = spec.behavior
        self.kind = b["type"]
        self.seq = list(b.get("goals") or [])
        self.loop = b.get("loop", self.kind == "planner")
        self.radius = float(b.get("arrival_radius", 0.3))
        self.dwell = float(b.get("dwell", 0.0))
        self.switch_rate = float(b.get("switch_rate", 0.0))
        self.rng = rng
        self.goals = goals
        self.k = 0
        self.waited = 0.0
        if self.seq:
            self.goal = self.seq[0]
        else:
            self.goal = goals.ids[int(rng.integers(len(goals)))]

    def _random_next(self):
        others = [g for g in self.goals.ids if g != self.goal]
        return others[int(self.rng.integers(len(others)))] if others else self.goal

    def update(self, agent: AgentState, dt: float):
        """Advance the goal after arrival (or a random switch). Returns the new goal or None."""
        # draw every step so the stream is independent of arrival timing
        u = self.rng.random()
        if self.kind == "random" and self.switch_rate > 0 and u < 1.0 - math.exp(-self.switch_rate * dt):
            self.goal = self._random_next()
            return self.goal
        d = float(np.hypot(*(self.goals.point(self.goal) - agent.position)))
        if d > self.radius:
            self.waited = 0.0
            return None
        self.waited += dt
        if self.waited + 1e-9 < self.dwell:
            return None
        self.waited = 0.0
        if self.kind == "random":
            self.goal = self._random_next()
            return self.goal
        if self.k + 1 < len(self.seq) or self.loop:
            self.k = (self.k + 1) % len(self.seq)
            nxt = self.seq[self.k]
            if nxt != self.goal:
                self.goal = nxt
                return nxt
        return None


def _fmt(x):
    return [float(v) for v in np.asarray(x).reshape(-1)]


def _tracks_record(ts):
    if ts is None:
        return None
    return [
        {
            "id": int(t.id),
            "state": _fmt(t.state),
            "confirmed": bool(t.confirmed),
            "members": [int(m.id) for m in t.members],
            "last_seen": float(t.last_seen),
        }
        for t in ts.tracks
    ]


def _tracker_config(scn: Scenario, dt: float) -> TrackerConfig:
    t = scn.tracker
    vs = float(t.get("velocity_smoothing", 0.0))
    local = AssocConfig(confirm_hits=int(t.get("confirm_hits", 3)), velocity_smoothing=vs)
    glob = AssocConfig(confirm_hits=int(t.get("global_confirm_hits", 2)), velocity_smoothing=vs)
    return TrackerConfig(
        n_local=int(t.get("n_local", 500)),
        n_global=int(t.get("n_global", 1000)),
        meas_sigma=float(t.get("meas_sigma", 0.1)),
        snap_to_detection=bool(t.get("snap_to_detection", False)),
        local_assoc=local,
        global_assoc=glob,
    )


def _observations(ts, template):
    obs = []
    if ts is None:
        return obs
    vmax = template.get("max_speed", 1.5)
    for tid, s in sorted(ts.reported().items()):
        v = np.asarray(s[2:], dtype=np.float64)
        sp = float(np.hypot(*v))
        if sp > vmax:
            v = v * (vmax / sp)
        obs.append(AgentState(tid, s[:2], v, **template))
    return obs


def run_scenario(
    scn: Scenario,
    mode: str = "inference-only",
    seed: int | None = None,
    drop_prob: float | None = None,
    kills=(),
    hrvo_config: HrvoConfig = HrvoConfig(),
) -> RunResult:
    """Run ``scn`` and return the full record list plus structured traces.

    ``kills`` is a sequence of ``(node, time)`` pairs added to the
    scenario's own network events.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    seed = scn.seed if seed is None else int(seed)
    dt = scn.step_dt
    ss = np.random.SeedSequence(seed)
    beh_ss, sens_ss, node_ss, bus_ss = ss.spawn(4)
    beh_rngs = [np.random.default_rng(s) for s in beh_ss.spawn(max(len(scn.agents), 1))]
    sens_rng = np.random.default_rng(sens_ss)

    goals = scn.goals
    behaviors = {a.state.id: _Behavior(a, goals, r) for a, r in zip(scn.agents, beh_rngs)}
    appearances = {a.state.id: a.appearance for a in scn.agents}
    world = WorldState(0.0, tuple(a.state for a in scn.agents), {k: b.goal for k, b in behaviors.items()})

    full = mode == "full-pipeline"
    nodes, bus, delta_t, observer = {}, None, dt, None
    if full:
        if not scn.sensors:
            raise ValueError("full-pipeline mode needs at least one sensor")
        net = scn.network
        delta_t = float(net.get("delta_t", dt))
        link = LinkModel(
            float(net.get("latency", 0.0)),
            float(net.get("jitter", 0.0)),
            float(net.get("drop_prob", 0.0) if drop_prob is None else drop_prob),
        )
        cfg = _tracker_config(scn, dt)
        node_seeds = node_ss.spawn(len(scn.sensors))
        nodes = {s.id: TrackerNode(s.id, cfg, np.random.default_rng(q)) for s, q in zip(scn.sensors, node_seeds)}
        bus = MessageBus(nodes, link, np.random.default_rng(bus_ss))
        for e in net.get("kill", []):
            bus.kill(int(e["node"]), float(e["at"]))
        for e in net.get("revive", []):
            bus.revive(int(e["node"]), float(e["at"]))
        for node, at in kills:
            bus.kill(int(node), float(at))
        observer = int(scn.tracker.get("observer", scn.sensors[0].id))
    template = scn.agent_template()

    result = RunResult(scn.name, mode, seed)
    result.node_tracks = {n: [] for n in nodes}
    snap = InferenceSnapshot.empty(0.0)
    commands, statuses = {}, {}

    for k in range(scn.n_steps + 1):
        events = []
        diags = []
        if k > 0:
            commands, statuses = {}, {}
            for a in world.agents:
                b = behaviors[a.id]
                goal = goals.point(b.goal)
                if b.kind == "scripted":
                    commands[a.id] = preferred_velocity(a, goal, dt)
                    statuses[a.id] = "scripted"
                else:
                    cand = plan_velocity(a, goal, world.agents, dt, hrvo_config)
                    commands[a.id] = cand.velocity
                    statuses[a.id] = cand.status
            world, d = step_world(world, dt, commands)
            diags.extend(d)
            world = WorldState(round(k * dt, 12), world.agents, world.goal_assignment)
            changed = {}
            for a in world.agents:
                old = behaviors[a.id].goal
                new = behaviors[a.id].update(a, dt)
                if new is not None and new != old:
                    changed[a.id] = new
                    events.append({"kind": "goal_switch", "agent": a.id, "from": old, "to": new, "time": world.time})
            if changed:
                world = WorldState(world.time, world.agents, {**world.goal_assignment, **changed})
        now = world.time

        measurements = {}
        tracks_rec = {}
        if full:
            occluded = {
                (o["sensor"], o["agent"]) for o in scn.occlusions if o["start"] <= now + 1e-9 and now < o["end"] - 1e-9
            }
            measurements = simulate_sensors(world, scn.sensors, sens_rng, appearances, occluded)
            alive = {n: bus.alive(n, now) for n in nodes}
            for n, node in nodes.items():
                if alive[n]:
                    node.local_step(measurements[n], now, dt)
                    bus.broadcast(n, node.belief, now)
            for n, node in nodes.items():
                if alive[n]:
                    received = bus.collect(n, now, delta_t)
                    node.global_step(received, now, delta_t)
                    result.node_tracks[n].append(node.global_tracks)
                else:
                    bus.collect(n, now, delta_t)
                    result.node_tracks[n].append(None)
                tracks_rec[str(n)] = _tracks_record(result.node_tracks[n][-1])
                diags.extend(node.diagnostics)
                node.diagnostics.clear()
            obs = _observations(result.node_tracks[observer][-1], template)
        else:
            obs = list(world.agents)

        snap = infer_all(snap, obs, goals, dt, time=now, config=scn.inference)
        result.snapshots.append(snap)
        result.truth.append(world)
        result.events.extend(events)

        rec = {
            "t": now,
            "step": k,
            "truth": [
                {"id": a.id, "pos": _fmt(a.position), "vel": _fmt(a.velocity), "goal": world.goal_assignment.get(a.id)}
                for a in world.agents
            ],
            "commands": {str(i): _fmt(v) for i, v in commands.items()},
            "status": {str(i): s for i, s in statuses.items()},
            "beliefs": {str(a): b.posterior for a, b in snap.beliefs.items()},
            "likelihoods": {f"{a}|{g}": v for (a, g), v in snap.likelihoods.items()},
            "events": events,
            "diagnostics": diags + snap.diagnostics,
        }
        if full:
            rec["measurements"] = {str(s): [_fmt(m.position) for m in z] for s, z in measurements.items()}
            rec["tracks"] = tracks_rec
        # goal ids in beliefs are dictionary keys: stringify for JSON
        rec["beliefs"] = {a: {str(g): p for g, p in post.items()} for a, post in rec["beliefs"].items()}
        result.records.append(rec)

    if bus is not None:
        result.network = dict(bus.stats)
    return result


def node_metrics(result: RunResult, cutoff: float = 1.0):
    """CLEAR MOT of every node's global TrackSet trace against the truth."""
    return {n: evaluate(trace, result.truth, cutoff, times=result.times) for n, trace in result.node_tracks.items()}


def records_metrics(records, cutoff: float = 1.0):
    """Same as :func:`node_metrics` but from trace records (``jsonl``/``bin`` files)."""
    truth = [{a["id"]: a["pos"] for a in r["truth"]} for r in records]
    times = [r["t"] for r in records]
    nodes = sorted({n for r in records for n in r.get("tracks", {})}, key=int)
    out = {}
    for n in nodes:
        trace = []
        for r in records:
            frame = {}
            for t in r["tracks"].get(n) or []:
                if not t["confirmed"]:
                    continue
                for m in t["members"] if len(t["members"]) >= 2 else [t["id"]]:
                    frame[m] = t["state"][:2]
            trace.append(frame)
        out[int(n)] = evaluate(trace, truth, cutoff, times=times)
    return out
