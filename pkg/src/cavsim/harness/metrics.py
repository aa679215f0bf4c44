"""Run metrics: tracking error statistics, pointwise minimum distance, and
time-to-zone (TTZ) conflict banding.

TTZ definition used throughout: the time for an actor to reach the declared
conflict zone traveling along its current velocity ray at its current speed;
infinite when stopped, receding, or aimed away from the zone.  A joint event
is recorded when both actors' TTZ drop below the same band (2/4/6 s).
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
import math

import numpy as np

TTZ_BANDS = (2.0, 4.0, 6.0)


@dataclass
class TtzEvent:
    t: float
    actor: str
    ttz_vehicle: float
    ttz_vru: float
    band: float


@dataclass
class Metrics:
    rms_e_y: float = 0.0
    max_abs_e_y: float = 0.0
    min_obstacle_distance: tuple = (None, None)
    ttz_events: list = field(default_factory=list)
    collision: bool = False
    solve_time_mean: float = 0.0
    solve_time_p99: float = 0.0
    diverged: bool = False
    empty: bool = True

    def to_dict(self):
        d = asdict(self)
        d["min_obstacle_distance"] = {
            "t": self.min_obstacle_distance[0],
            "d": self.min_obstacle_distance[1],
        }
        return d


@dataclass
class ConflictZone:
    """Convex planar polygon given counter-clockwise; a segment degenerates to
    a two-vertex polygon."""

    vertices: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if self.vertices.shape[0] < 2:
            raise ValueError("zone needs at least two vertices")

    @classmethod
    def rect(cls, x_min, x_max, y_min, y_max):
        return cls([(x_min, y_min), (x_max, y_min), (x_max, y_max), (x_min, y_max)])

    def edges(self):
        verts = self.vertices
        n = verts.shape[0]
        if n == 2:
            yield verts[0], verts[1]
            return
        for k in range(n):
            yield verts[k], verts[(k + 1) % n]

    def ray_distance(self, origin, direction):
        """Distance along the (unit) direction ray to the first zone edge;
        inf when the ray misses the zone entirely."""
        ox, oy = origin
        dx, dy = direction
        best = math.inf
        for a, b in self.edges():
            ex, ey = b[0] - a[0], b[1] - a[1]
            det = dx * (-ey) - dy * (-ex)
            if abs(det) < 1e-12:
                continue
            rx, ry = a[0] - ox, a[1] - oy
            s = (rx * (-ey) - ry * (-ex)) / det
            u = (dx * ry - dy * rx) / det
            if s >= 0.0 and 0.0 <= u <= 1.0:
                best = min(best, s)
        return best


def ttz_series(traj, zone: ConflictZone):
    """Per-sample TTZ for a trajectory array with columns (t, x, y)."""
    traj = np.asarray(traj, dtype=float)
    n = traj.shape[0]
    out = np.full(n, math.inf)
    for i in range(n):
        j = i + 1 if i + 1 < n else i
        k = i if i + 1 < n else i - 1
        if k < 0:
            break
        dt = traj[j, 0] - traj[k, 0]
        if dt <= 0.0:
            continue
        vel = (traj[j, 1:3] - traj[k, 1:3]) / dt
        speed = float(np.hypot(vel[0], vel[1]))
        if speed < 1e-9:
            continue
        dist = zone.ray_distance(traj[i, 1:3], vel / speed)
        if math.isfinite(dist):
            out[i] = dist / speed
    return out


def compute_ttz(vehicle_traj, vru_traj, zone: ConflictZone):
    """(ttz_vehicle, ttz_vru, events): joint band entries at rising edges."""
    vehicle_traj = np.asarray(vehicle_traj, dtype=float)
    vru_traj = np.asarray(vru_traj, dtype=float)
    if vehicle_traj.shape[0] != vru_traj.shape[0]:
        raise ValueError("trajectories must share the sampling grid")
    if not np.allclose(vehicle_traj[:, 0], vru_traj[:, 0]):
        raise ValueError("trajectories must be time-aligned")
    ttz_v = ttz_series(vehicle_traj, zone)
    ttz_p = ttz_series(vru_traj, zone)
    events = []
    for band in TTZ_BANDS:
        inside = False
        for i in range(len(ttz_v)):
            joint = ttz_v[i] < band and ttz_p[i] < band
            if joint and not inside:
                events.append(TtzEvent(float(vehicle_traj[i, 0]), "joint",
                                       float(ttz_v[i]), float(ttz_p[i]), band))
            inside = joint
    return ttz_v, ttz_p, events


def band_fraction(ttz_v, ttz_p, band):
    """Fraction of samples with both actors' TTZ below the band."""
    joint = (np.asarray(ttz_v) < band) & (np.asarray(ttz_p) < band)
    return float(np.mean(joint)) if joint.size else 0.0


def min_distance(traj_a, traj_b):
    """Pointwise minimum distance between two same-grid trajectories."""
    traj_a = np.asarray(traj_a, dtype=float)
    traj_b = np.asarray(traj_b, dtype=float)
    if traj_a.shape[0] != traj_b.shape[0]:
        raise ValueError("trajectories must share the sampling grid")
    d = np.hypot(traj_a[:, 1] - traj_b[:, 1], traj_a[:, 2] - traj_b[:, 2])
    k = int(np.argmin(d))
    return float(traj_a[k, 0]), float(d[k])
