"""Gaussian-mixture beliefs exchanged between tracker nodes, and their wire format.

Record layout (little-endian), preceded by a u32 byte length::

    sensor u32 | time f64 | count u16 | count x component

    component = track_id u32 | weight f64 | mean 4 x f64
                | pos cov (xx, xy, yy) 3 x f64 | vel cov (xx, xy, yy) 3 x f64
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

_HEAD = struct.Struct("<IdH")
_COMP = struct.Struct("<Id4d3d3d")
_LEN = struct.Struct("<I")


class BeliefError(ValueError):
    """A belief that violates the mixture invariants or cannot be decoded."""


class Component(NamedTuple):
    track_id: int
    weight: float
    mean: np.ndarray  # (x, y, vx, vy)
    covariance: np.ndarray  # 4x4 block diagonal


@dataclass(frozen=True, eq=False)
class GmmBelief:
    sensor: int
    time: float
    components: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(Component(*c) for c in self.components))

    def __len__(self):
        return len(self.components)

    @property
    def weights(self):
        return np.array([c.weight for c in self.components])

    @property
    def means(self):
        return np.array([c.mean for c in self.components]).reshape(-1, 4)

    def validate(self, tol: float = 1e-9):
        """Raise :class:`BeliefError` unless weights sum to 1, covariances are SPD and ids unique."""
        if not self.components:
            return
        ids = [c.track_id for c in self.components]
        if len(set(ids)) != len(ids):
            raise BeliefError(f"sensor {self.sensor}: duplicate track ids")
        w = self.weights
        if np.any(w < 0) or abs(w.sum() - 1.0) > tol:
            raise BeliefError(f"sensor {self.sensor}: weights sum to {w.sum()!r}")
        for c in self.components:
            cov = np.asarray(c.covariance)
            if cov.shape != (4, 4) or not np.all(np.isfinite(cov)) or not np.allclose(cov, cov.T, atol=1e-12):
                raise BeliefError(f"sensor {self.sensor}: bad covariance for track {c.track_id}")
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise BeliefError(f"sensor {self.sensor}: covariance of track {c.track_id} not SPD") from None
            if not np.all(np.isfinite(c.mean)):
                raise BeliefError(f"sensor {self.sensor}: non-finite mean")

    def is_valid(self) -> bool:
        try:
            self.validate()
        except BeliefError:
            return False
        return True


def encode(belief: GmmBelief) -> bytes:
    parts = [_HEAD.pack(int(belief.sensor), float(belief.time), len(belief.components))]
    for c in belief.components:
        m = np.asarray(c.mean, dtype=np.float64)
        s = np.asarray(c.covariance, dtype=np.float64)
        parts.append(
            _COMP.pack(
                int(c.track_id),
                float(c.weight),
                *m,
                s[0, 0], s[0, 1], s[1, 1],
                s[2, 2], s[2, 3], s[3, 3],
            )
        )
    body = b"".join(parts)
    return _LEN.pack(len(body)) + body


def decode(buf: bytes) -> GmmBelief:
    if len(buf) < _LEN.size:
        raise BeliefError("truncated record")
    (n,) = _LEN.unpack_from(buf, 0)
    if len(buf) != _LEN.size + n or n < _HEAD.size:
        raise BeliefError("length prefix does not match record size")
    sensor, t, count = _HEAD.unpack_from(buf, _LEN.size)
    if n != _HEAD.size + count * _COMP.size:
        raise BeliefError("component count does not match record size")
    comps = []
    off = _LEN.size + _HEAD.size
    for _ in range(count):
        f = _COMP.unpack_from(buf, off)
        off += _COMP.size
        cov = np.zeros((4, 4))
        cov[0, 0], cov[0, 1], cov[1, 1] = f[6:9]
        cov[2, 2], cov[2, 3], cov[3, 3] = f[9:12]
        cov[1, 0], cov[3, 2] = cov[0, 1], cov[2, 3]
        comps.append(Component(f[0], f[1], np.array(f[2:6]), cov))
    return GmmBelief(sensor, t, tuple(comps))
