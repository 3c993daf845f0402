"""A tracker node: one sensor's particles, local tracks and global tracks."""

from __future__ import annotations

import numpy as np

from .belief import GmmBelief
from .filter import ParticleSet, TrackerConfig, global_estimate, local_estimate
from .tracks import TrackSet


class TrackerNode:
    def __init__(self, sensor: int, config: TrackerConfig = TrackerConfig(), seed=0):
        self.sensor = int(sensor)
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.particles = ParticleSet()
        self.local_tracks = TrackSet()
        self.global_tracks = TrackSet()
        self.belief = GmmBelief(self.sensor, 0.0, ())
        self.diagnostics: list = []

    def local_step(self, z, now: float, dt: float) -> GmmBelief:
        self.belief, self.local_tracks = local_estimate(
            self.particles, z, self.local_tracks, dt, now, self.rng, self.sensor, self.config, self.diagnostics
        )
        return self.belief

    def global_step(self, received, now: float, delta_t: float) -> TrackSet:
        self.global_tracks, _ = global_estimate(
            received,
            self.belief,
            self.global_tracks,
            delta_t,
            now,
            self.rng,
            self.config,
            self.local_tracks,
            self.diagnostics,
        )
        return self.global_tracks
