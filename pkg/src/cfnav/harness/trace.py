"""Trace persistence (line-delimited JSON or compressed binary) and CSV exports."""

from __future__ import annotations

import csv
import json
import struct
import zlib
from pathlib import Path

MAGIC = b"CFNTRACE1\n"
_LEN = struct.Struct("<I")


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def header(result) -> dict:
    return {
        "kind": "header",
        "scenario": result.scenario,
        "mode": result.mode,
        "seed": result.seed,
        "network": result.network,
    }


def write_trace(result, path, fmt: str | None = None) -> Path:
    """Write one header record and one record per step. ``fmt`` is ``jsonl`` or ``bin``."""
    path = Path(path)
    fmt = fmt or ("bin" if path.suffix in (".bin", ".cft") else "jsonl")
    rows = [header(result)] + list(result.records)
    if fmt == "jsonl":
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for r in rows:
                f.write(_dumps(r))
                f.write("\n")
    elif fmt == "bin":
        with open(path, "wb") as f:
            f.write(MAGIC)
            for r in rows:
                blob = zlib.compress(_dumps(r).encode("utf-8"), 6)
                f.write(_LEN.pack(len(blob)))
                f.write(blob)
    else:
        raise ValueError(f"unknown trace format {fmt!r}")
    return path


def read_trace(path):
    """Return ``(header, records)`` from either trace format."""
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(len(MAGIC))
        if head == MAGIC:
            rows = []
            while True:
                b = f.read(_LEN.size)
                if not b:
                    break
                (n,) = _LEN.unpack(b)
                rows.append(json.loads(zlib.decompress(f.read(n)).decode("utf-8")))
        else:
            f.seek(0)
            rows = [json.loads(line) for line in f.read().decode("utf-8").splitlines() if line.strip()]
    if not rows or rows[0].get("kind") != "header":
        raise ValueError(f"{path}: missing trace header")
    return rows[0], rows[1:]


# -- plot data -----------------------------------------------------------------

def export_beliefs_csv(records, path):
    """Per step posterior and instantaneous likelihood for every (agent, goal)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "agent", "goal", "posterior", "likelihood", "true_goal"])
        for r in records:
            truth = {str(a["id"]): a["goal"] for a in r["truth"]}
            for agent, post in sorted(r["beliefs"].items()):
                for goal, p in post.items():
                    lik = r["likelihoods"].get(f"{agent}|{goal}", "")
                    w.writerow([r["t"], agent, goal, p, lik, truth.get(agent, "")])


def export_trajectories_csv(records, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "agent", "x", "y", "vx", "vy", "goal"])
        for r in records:
            for a in r["truth"]:
                w.writerow([r["t"], a["id"], *a["pos"], *a["vel"], a["goal"]])


def export_goal_grid_csv(records, goals, agent, path, step=-1):
    """Posterior over a goal grid for one agent at one step (heat-map data)."""
    post = records[step]["beliefs"].get(str(agent), {})
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["goal", "x", "y", "posterior"])
        for gid, p in zip(goals.ids, goals.points):
            w.writerow([gid, p[0], p[1], post.get(str(gid), "")])


def export_tracks_csv(records, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "node", "track", "x", "y", "vx", "vy", "confirmed", "members"])
        for r in records:
            for node, tracks in sorted(r.get("tracks", {}).items()):
                for t in tracks or []:
                    w.writerow([r["t"], node, t["id"], *t["state"], int(t["confirmed"]), " ".join(map(str, t["members"]))])
