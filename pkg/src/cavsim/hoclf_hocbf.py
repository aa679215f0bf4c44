"""High-order CLF/CBF steering controller for the 5-DOF lateral model.

Both the goal-distance Lyapunov function and the obstacle-distance barrier
have relative degree two in the steering input (steering acts through the
side-slip/yaw dynamics before it moves the position), so each is enforced
through its second derivative with a cascade of two positive gains.  Every
control step solves one QP over (delta_f, slack).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
import time

import numpy as np

from .numerics import QpProblem, solve_qp
from .path import ParamPath, PathProgress
from .vehicle_models import Lateral5DofState, VehicleParams, lateral_coeffs


@dataclass
class CircularObstacle:
    x_o: float
    y_o: float
    r_o: float
    vx: float = 0.0
    vy: float = 0.0

    def __post_init__(self):
        if self.r_o <= 0.0:
            raise ValueError("danger radius must be positive")

    def center_at(self, t):
        return self.x_o + self.vx * t, self.y_o + self.vy * t


@dataclass
class HoConfig:
    a1: float = 3.0
    a2: float = 2.0
    a3: float = 5.0
    a4: float = 6.0
    q: float = 1000.0
    u_ref: float = 0.0
    delta_f_max: float = 0.7

    def __post_init__(self):
        if min(self.a1, self.a2, self.a3, self.a4, self.q) <= 0.0:
            raise ValueError("gains and slack penalty must be positive")
        if self.delta_f_max <= 0.0:
            raise ValueError("steering bound must be positive")


@dataclass
class HoDiagnostics:
    status: str = "optimal"
    slack: float = 0.0
    barrier_values: list = field(default_factory=list)
    fallback: bool = False
    solve_time: float = 0.0


def _course_terms(state: Lateral5DofState, params: VehicleParams, V):
    """Shared pieces: course trig and the drift/input parts of the course rate."""
    a11, a12, _, _, b1, _ = lateral_coeffs(params, V)
    c = math.cos(state.beta + state.psi)
    s = math.sin(state.beta + state.psi)
    course_rate_drift = a11 * state.beta + a12 * state.r + state.r
    course_rate_gain = b1
    return c, s, course_rate_drift, course_rate_gain


def hoclf_terms(state: Lateral5DofState, goal, params: VehicleParams, V):
    """(V_val, Vdot, Lf2V, LgLfV) for the squared goal distance.

    Vdot carries no direct steering term; the input appears in the second
    derivative through the course-rate channel.
    """
    x_g, y_g = goal
    dx = state.x - x_g
    dy = state.y - y_g
    c, s, drift, gain = _course_terms(state, params, V)
    V_val = dx * dx + dy * dy
    Vdot = 2.0 * V * (dx * c + dy * s)
    lateral = -s * dx + c * dy
    Lf2V = 2.0 * V * V + 2.0 * V * lateral * drift
    LgLfV = 2.0 * V * lateral * gain
    return V_val, Vdot, Lf2V, LgLfV


def hocbf_terms(state: Lateral5DofState, obs: CircularObstacle,
                params: VehicleParams, V):
    """(h_val, hdot, Lf2h, LgLfh) for the squared-distance barrier
    h = (x-x_o)^2 + (y-y_o)^2 - r_o^2, with the obstacle's own (constant)
    velocity folded into the derivatives."""
    dx = state.x - obs.x_o
    dy = state.y - obs.y_o
    c, s, drift, gain = _course_terms(state, params, V)
    ddx = V * c - obs.vx
    ddy = V * s - obs.vy
    h_val = dx * dx + dy * dy - obs.r_o ** 2
    hdot = 2.0 * (dx * ddx + dy * ddy)
    lateral = dx * (-s) + dy * c
    Lf2h = 2.0 * (ddx * ddx + ddy * ddy) + 2.0 * V * lateral * drift
    LgLfh = 2.0 * V * lateral * gain
    return h_val, hdot, Lf2h, LgLfh


def assemble_and_solve(state: Lateral5DofState, goal, obstacles,
                       config: HoConfig, params: VehicleParams, V,
                       last_command=0.0):
    """One steering command from the HOCLF row (slack-relaxed) plus one hard
    HOCBF row per obstacle.  Infeasibility holds the previous command."""
    if len(obstacles) > 16:
        raise ValueError("at most 16 obstacles per solve")
    V_val, Vdot, Lf2V, LgLfV = hoclf_terms(state, goal, params, V)
    rows = [np.array([LgLfV, -1.0])]
    bounds = [-(Lf2V + (config.a1 + config.a2) * Vdot
                + config.a1 * config.a2 * V_val)]
    diag = HoDiagnostics()
    for obs in obstacles:
        h_val, hdot, Lf2h, LgLfh = hocbf_terms(state, obs, params, V)
        diag.barrier_values.append(h_val)
        # hddot + (a3+a4) hdot + a3*a4*h >= 0, hard (no slack column)
        rows.append(np.array([-LgLfh, 0.0]))
        bounds.append(Lf2h + (config.a3 + config.a4) * hdot
                      + config.a3 * config.a4 * h_val)
    rows.append(np.array([0.0, -1.0]))  # slack non-negative
    bounds.append(0.0)
    # Actuator limits inside the QP: a solution reported optimal is actually
    # realizable, so a barrier row can only be violated via infeasibility
    # (which is flagged) rather than silent post-hoc clipping.
    rows.append(np.array([1.0, 0.0]))
    bounds.append(config.delta_f_max)
    rows.append(np.array([-1.0, 0.0]))
    bounds.append(config.delta_f_max)

    problem = QpProblem(np.diag([2.0, 2.0 * config.q]),
                        np.array([-2.0 * config.u_ref, 0.0]),
                        np.array(rows), np.array(bounds))
    t0 = time.perf_counter()
    sol = solve_qp(problem)
    diag.solve_time = time.perf_counter() - t0
    diag.status = sol.status
    if sol.status != "optimal":
        diag.fallback = True
        delta_f, slack = float(last_command), 0.0
    else:
        delta_f, slack = float(sol.u_star[0]), float(sol.u_star[1])
        diag.slack = slack
    delta_f = min(max(delta_f, -config.delta_f_max), config.delta_f_max)
    return delta_f, slack, diag


def track_reference_path(state: Lateral5DofState, path: ParamPath,
                         progress: PathProgress, lookahead, obstacles,
                         config: HoConfig, params: VehicleParams, V,
                         last_command=0.0):
    """Steer toward the path point `lookahead` meters ahead of the current
    progress; the moving goal realizes path tracking through the goal-seeking
    controller."""
    if lookahead <= 0.0:
        raise ValueError("lookahead must be positive")
    goal = path.point(progress.gamma + lookahead)
    return assemble_and_solve(state, goal, obstacles, config, params, V,
                              last_command=last_command)
