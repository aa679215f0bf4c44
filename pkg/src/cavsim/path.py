"""Reference-path construction and evaluation.

Paths are built from sparse waypoints: densify by linear interpolation, then
fit segmented polynomials in x(gamma), y(gamma) with position+heading
continuity enforced at every joint. gamma is chord-length progress in meters.
"""

from __future__ import annotations

from dataclasses import dataclass
import csv
import math

import numpy as np


@dataclass
class PathSegment:
    coeffs_x: np.ndarray  # ascending powers of local parameter
    coeffs_y: np.ndarray
    gamma0: float
    gamma1: float


@dataclass
class PathProgress:
    gamma: float
    gamma_d: float = 1.0


class ParamPath:
    """Piecewise-polynomial planar path parameterized by progress gamma."""

    def __init__(self, segments):
        if not segments:
            raise ValueError("path needs at least one segment")
        self.segments = segments
        self.gamma_min = segments[0].gamma0
        self.gamma_max = segments[-1].gamma1
        self._starts = np.array([seg.gamma0 for seg in segments])

    def _segment_at(self, gamma):
        idx = int(np.searchsorted(self._starts, gamma, side="right")) - 1
        return self.segments[max(0, min(idx, len(self.segments) - 1))]

    def eval(self, gamma):
        """(point, heading, signed curvature) at progress gamma.

        Out-of-domain gamma is clamped; the clamped flag is exposed through
        eval_path.
        """
        g = min(max(gamma, self.gamma_min), self.gamma_max)
        seg = self._segment_at(g)
        t = g - seg.gamma0
        x = _polyval(seg.coeffs_x, t)
        y = _polyval(seg.coeffs_y, t)
        dx = _polyval(_polyder(seg.coeffs_x), t)
        dy = _polyval(_polyder(seg.coeffs_y), t)
        ddx = _polyval(_polyder(_polyder(seg.coeffs_x)), t)
        ddy = _polyval(_polyder(_polyder(seg.coeffs_y)), t)
        heading = math.atan2(dy, dx)
        speed2 = dx * dx + dy * dy
        curvature = (dx * ddy - dy * ddx) / max(speed2, 1e-12) ** 1.5
        return np.array([x, y]), heading, curvature

    def point(self, gamma):
        return self.eval(gamma)[0]

    def tangent(self, gamma):
        g = min(max(gamma, self.gamma_min), self.gamma_max)
        seg = self._segment_at(g)
        t = g - seg.gamma0
        return np.array([_polyval(_polyder(seg.coeffs_x), t),
                         _polyval(_polyder(seg.coeffs_y), t)])


def _polyval(c, t):
    acc = 0.0
    for a in reversed(c):
        acc = acc * t + a
    return float(acc)


def _polyder(c):
    return np.array([k * c[k] for k in range(1, len(c))])


def densify_waypoints(samples, spacing):
    """Linear interpolation to points at most `spacing` apart; endpoints kept."""
    if len(samples) < 2:
        raise ValueError("need at least two sample waypoints")
    if spacing <= 0.0:
        raise ValueError("spacing must be positive")
    pts = [np.asarray(p, dtype=float) for p in samples]
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        seg_len = float(np.linalg.norm(b - a))
        if seg_len == 0.0:
            raise ValueError("duplicate consecutive waypoints")
        n = max(1, math.ceil(seg_len / spacing))
        for k in range(1, n + 1):
            out.append(a + (b - a) * (k / n))
    return out


def load_waypoints_csv(path):
    """Waypoint file: CSV with header x_m,y_m."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames[:2]] != ["x_m", "y_m"]:
            raise ValueError("waypoint CSV must have header x_m,y_m")
        return [(float(row["x_m"]), float(row["y_m"])) for row in reader]


def fit_segmented_path(dense, n_segments=4, degree=5):
    """Constrained least-squares polynomial fit per segment.

    Equality constraints tie position and first derivative (heading) of
    adjacent segments at every joint, giving a C1 path.
    """
    pts = np.asarray(dense, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need a list of 2D points")
    chord = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    total = chord[-1]
    if total <= 0.0:
        raise ValueError("degenerate waypoint set")
    bounds = np.linspace(0.0, total, n_segments + 1)
    n_coef = degree + 1
    idx_of = np.clip(np.searchsorted(bounds, chord, side="right") - 1, 0, n_segments - 1)
    for k in range(n_segments):
        if np.count_nonzero(idx_of == k) < n_coef:
            raise ValueError(f"segment {k} has fewer points than degree+1; "
                             "reduce n_segments or degree")

    seg_len = bounds[1] - bounds[0]

    def fit_axis(vals):
        # Per-segment LS blocks in the normalized parameter tau = t/seg_len
        # (keeps the KKT system well conditioned); joints via multipliers.
        n_var = n_segments * n_coef
        AtA = np.zeros((n_var, n_var))
        Atb = np.zeros(n_var)
        for k in range(n_segments):
            mask = idx_of == k
            tau = (chord[mask] - bounds[k]) / seg_len
            M = np.vander(tau, n_coef, increasing=True)
            sl = slice(k * n_coef, (k + 1) * n_coef)
            AtA[sl, sl] += M.T @ M
            Atb[sl] += M.T @ vals[mask]
        cons = []
        for k in range(n_segments - 1):
            pos_l = np.ones(n_coef)  # tau = 1 at the segment end
            der_l = np.arange(n_coef, dtype=float)
            pos_r = np.zeros(n_coef)
            pos_r[0] = 1.0
            der_r = np.zeros(n_coef)
            der_r[1] = 1.0
            for left, right in ((pos_l, pos_r), (der_l, der_r)):
                row = np.zeros(n_var)
                row[k * n_coef:(k + 1) * n_coef] = left
                row[(k + 1) * n_coef:(k + 2) * n_coef] = -right
                cons.append(row)
        C = np.array(cons) if cons else np.zeros((0, n_var))
        kkt = np.block([[AtA, C.T], [C, np.zeros((C.shape[0], C.shape[0]))]])
        rhs = np.concatenate([Atb, np.zeros(C.shape[0])])
        sol, residual, rank, _ = np.linalg.lstsq(kkt, rhs, rcond=None)
        if rank < kkt.shape[0]:
            raise ValueError("rank-deficient segmented fit; add points or lower degree")
        coeffs_tau = sol[:n_var].reshape(n_segments, n_coef)
        # Convert back to the local arc-length parameter.
        scale = seg_len ** -np.arange(n_coef, dtype=float)
        return coeffs_tau * scale

    cx = fit_axis(pts[:, 0])
    cy = fit_axis(pts[:, 1])
    segments = [PathSegment(cx[k], cy[k], bounds[k], bounds[k + 1])
                for k in range(n_segments)]
    return ParamPath(segments)


def eval_path(path: ParamPath, gamma):
    """(point, heading, curvature, clamped) at progress gamma."""
    clamped = gamma < path.gamma_min or gamma > path.gamma_max
    point, heading, curvature = path.eval(gamma)
    return point, heading, curvature, clamped


def advance_progress(progress: PathProgress, e, dt, sigma=1.0):
    """Progress dynamics with error-based slowdown:
    gamma_dot = gamma_d * sigma^2 / (sigma^2 + ||e||^2)."""
    if dt <= 0.0 or sigma <= 0.0:
        raise ValueError("dt and sigma must be positive")
    err2 = float(np.dot(e, e))
    gamma_dot = progress.gamma_d * sigma * sigma / (sigma * sigma + err2)
    return PathProgress(progress.gamma + gamma_dot * dt, progress.gamma_d)


def project_to_path(path: ParamPath, point, n_coarse=400):
    """Progress of the nearest path point (coarse scan + golden refinement).

    Ties between equidistant candidates resolve to the smaller gamma.
    """
    point = np.asarray(point, dtype=float)
    gammas = np.linspace(path.gamma_min, path.gamma_max, n_coarse)
    d2 = np.array([float(np.sum((path.point(g) - point) ** 2)) for g in gammas])
    k = int(np.argmin(d2))  # argmin takes the first (smallest-gamma) minimum
    lo = gammas[max(0, k - 1)]
    hi = gammas[min(n_coarse - 1, k + 1)]
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    for _ in range(60):
        c = b - phi * (b - a)
        d = a + phi * (b - a)
        if np.sum((path.point(c) - point) ** 2) < np.sum((path.point(d) - point) ** 2):
            b = d
        else:
            a = c
    return 0.5 * (a + b)


def path_frame_error(pose, path: ParamPath, V, K):
    """Signed lateral error, heading error and local curvature at the preview
    point x + l_s*(cos psi, sin psi) with l_s = K*V.  e_y positive to the
    vehicle's left; curvature positive for left turns."""
    if V < 0.0:
        raise ValueError("V must be non-negative")
    x, y, psi = pose
    l_s = K * V
    preview = np.array([x + l_s * math.cos(psi), y + l_s * math.sin(psi)])
    gamma = project_to_path(path, preview)
    p, heading, curvature = path.eval(gamma)
    delta = preview - p
    e_y = float(-math.sin(heading) * delta[0] + math.cos(heading) * delta[1])
    dpsi_p = _wrap(psi - heading)
    return e_y, dpsi_p, curvature


def _wrap(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def lane_change_waypoints(length=200.0, offset=3.5, blend_start=70.0,
                          blend_len=60.0, n=41):
    """Single-lane-change waypoint set: two offset straights joined by a
    sigmoid blend (the canonical collision-avoidance maneuver shape)."""
    xs = np.linspace(0.0, length, n)
    mid = blend_start + 0.5 * blend_len
    ys = offset / (1.0 + np.exp(-10.0 * (xs - mid) / blend_len))
    return list(zip(xs, ys))
