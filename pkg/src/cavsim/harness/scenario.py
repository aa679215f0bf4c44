"""Scenario configuration and the multi-rate simulation loop.

Fixed rates: plant integration at 1 kHz, control at 100 Hz (10 physics
sub-steps per control step), lane decisions at 5 Hz (20 control steps per
decision).  The measurement delay sits on the sensor-to-controller path.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
import json
import math
import time

import numpy as np

from .. import __version__
from ..cdob import (CdobState, PidGains, PidState, cdob_step, make_cdob,
                    pid_step)
from ..clf_cbf import ClfCbfConfig, EllipseRegion, pair_barrier, \
    solve_unicycle_control, vehicle_region
from ..hoclf_hocbf import CircularObstacle, HoConfig, track_reference_path
from ..path import (ParamPath, PathProgress, advance_progress,
                    densify_waypoints, fit_segmented_path,
                    lane_change_waypoints, load_waypoints_csv)
from ..vehicle_models import (Lateral5DofState, LinearPtState, UnicycleState,
                              VehicleParams, lateral5dof_deriv,
                              linear_pt_deriv, unicycle_deriv)
from .metrics import ConflictZone, Metrics, band_fraction, compute_ttz

DT_PHYS = 0.001
DT_CTRL = 0.01
DT_DECISION = 0.2
PHYS_PER_CTRL = 10
CTRL_PER_DECISION = 20
SCHEMA_VERSION = 1

MODEL_FOR_CONTROLLER = {
    "cdob_pid": "linear_pt",
    "pid_only": "linear_pt",
    "clf_cbf": "unicycle",
    "hoclf_hocbf": "lateral5dof",
    "ddqn_hier": "lateral5dof",
    "scripted": "unicycle",
}


class ScenarioError(ValueError):
    pass


class DelayLine:
    """FIFO measurement delay of round(delay/dt) samples, pre-filled with the
    initial value so the early output is well defined."""

    def __init__(self, delay, dt, initial=0.0):
        if delay < 0.0 or dt <= 0.0:
            raise ValueError("delay must be >= 0 and dt > 0")
        self.depth = int(round(delay / dt))
        self._fifo = deque([initial] * self.depth)

    def step(self, sample):
        if self.depth == 0:
            return sample
        self._fifo.append(sample)
        return self._fifo.popleft()


@dataclass
class ScenarioConfig:
    name: str
    controller: str
    model: str = ""
    path: dict = field(default_factory=lambda: {"type": "straight", "length": 150.0})
    obstacles: list = field(default_factory=list)
    vru: list = field(default_factory=list)
    zone: dict = None
    V: float = 5.0
    delay_td: float = 0.0
    duration: float = 20.0
    seed: int = 0
    out_dir: str = None
    options: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.controller not in MODEL_FOR_CONTROLLER:
            raise ScenarioError(f"unknown controller '{self.controller}'")
        expected = MODEL_FOR_CONTROLLER[self.controller]
        if not self.model:
            self.model = expected
        elif self.model != expected:
            raise ScenarioError(
                f"controller '{self.controller}' requires model '{expected}', "
                f"got '{self.model}'")
        if self.duration < 0.0:
            raise ScenarioError("duration must be non-negative")
        if self.delay_td < 0.0:
            raise ScenarioError("delay_td must be non-negative")
        if self.schema_version != SCHEMA_VERSION:
            raise ScenarioError(f"unsupported schema_version {self.schema_version}")

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ScenarioError(f"malformed scenario JSON: {exc}") from exc
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ScenarioError(f"unknown scenario fields: {sorted(unknown)}")
        if "name" not in raw or "controller" not in raw:
            raise ScenarioError("scenario requires 'name' and 'controller' fields")
        return cls(**raw)

    def to_dict(self):
        return {
            "schema_version": self.schema_version, "name": self.name,
            "model": self.model, "controller": self.controller,
            "path": self.path, "obstacles": self.obstacles, "vru": self.vru,
            "zone": self.zone, "V": self.V, "delay_td": self.delay_td,
            "duration": self.duration, "seed": self.seed,
            "options": self.options,
        }


@dataclass
class TrajectoryLog:
    rows: list = field(default_factory=list)
    actors: dict = field(default_factory=dict)
    solve_times: list = field(default_factory=list)
    ttz: dict = field(default_factory=dict)


def build_path(path_cfg) -> ParamPath:
    kind = path_cfg.get("type")
    if kind == "lane_change":
        wps = lane_change_waypoints(
            length=path_cfg.get("length", 200.0),
            offset=path_cfg.get("offset", 3.5),
            blend_start=path_cfg.get("blend_start", 70.0),
            blend_len=path_cfg.get("blend_len", 60.0))
    elif kind == "straight":
        length = path_cfg.get("length", 150.0)
        wps = [(x, 0.0) for x in np.linspace(0.0, length, 31)]
    elif kind == "waypoints":
        wps = [tuple(p) for p in path_cfg["points"]]
    elif kind == "waypoints_csv":
        wps = load_waypoints_csv(path_cfg["file"])
    else:
        raise ScenarioError(f"unknown path type '{kind}'")
    dense = densify_waypoints(wps, path_cfg.get("spacing", 2.0))
    return fit_segmented_path(dense, n_segments=path_cfg.get("n_segments", 4))


def _signed_lateral_error(path, gamma, x, y):
    p, heading, curvature = path.eval(gamma)
    return (-math.sin(heading) * (x - p[0]) + math.cos(heading) * (y - p[1]),
            heading, curvature, p)


def _row(t, x, y, psi, beta, r, V, delta_f, e_y, gamma, min_obs, qp_status):
    return {"t_s": t, "x_m": x, "y_m": y, "psi_rad": psi, "beta_rad": beta,
            "r_radps": r, "V_mps": V, "delta_f_rad": delta_f, "e_y_m": e_y,
            "gamma": gamma, "min_obs_dist_m": min_obs, "qp_status": qp_status}


def compute_metrics(log: TrajectoryLog, collision=False, diverged=False):
    m = Metrics(collision=collision, diverged=diverged)
    if not log.rows:
        return m
    m.empty = False
    e = np.array([row["e_y_m"] for row in log.rows])
    m.rms_e_y = float(np.sqrt(np.mean(e * e)))
    m.max_abs_e_y = float(np.max(np.abs(e)))
    dists = [(row["t_s"], row["min_obs_dist_m"]) for row in log.rows
             if math.isfinite(row["min_obs_dist_m"])]
    if dists:
        t_star, d_min = min(dists, key=lambda td: td[1])
        m.min_obstacle_distance = (t_star, d_min)
    if log.solve_times:
        st = np.array(log.solve_times)
        m.solve_time_mean = float(np.mean(st))
        m.solve_time_p99 = float(np.percentile(st, 99))
    return m


def _run_linear_pt(config: ScenarioConfig):
    params = VehicleParams(**config.options.get("params", {}))
    V = config.V
    path = build_path(config.path)
    gains = PidGains(*config.options.get("gains", (0.5, 0.2, 0.0)), V=V)
    use_cdob = config.controller == "cdob_pid"
    cdob = make_cdob(params, V, DT_CTRL,
                     q_order=config.options.get("q_order", 2),
                     q_cutoff=config.options.get("q_cutoff", 40.0),
                     leak=config.options.get("model_leak", 0.2),
                     delay_td=config.delay_td)
    delay = DelayLine(config.delay_td, DT_CTRL)
    pid = PidState()
    state = LinearPtState()
    gamma = 0.0
    u = 0.0
    log = TrajectoryLog()
    diverged = False
    n_ctrl = int(round(config.duration / DT_CTRL))
    for k in range(n_ctrl + 1):
        t = k * DT_CTRL
        _, heading, rho, p = _signed_lateral_error(path, gamma, 0.0, 0.0)
        y_true = state.e_y
        y_delayed = delay.step(y_true)
        if use_cdob:
            y_fb = cdob_step(cdob, u, y_delayed)
            # Integrate the raw delayed error: the compensation high-passes
            # the measurement, so offsets are only visible to slow integral
            # action on the unmodified signal.
            u = pid_step(-y_fb, gains, DT_CTRL, pid,
                         delta_min=params.delta_f_min,
                         delta_max=params.delta_f_max,
                         integral_error=-y_delayed)
        else:
            u = pid_step(-y_delayed, gains, DT_CTRL, pid,
                         delta_min=params.delta_f_min,
                         delta_max=params.delta_f_max)
        # Reconstruct the global pose from progress + lateral offset.
        normal = np.array([-math.sin(heading), math.cos(heading)])
        pos = p + normal * state.e_y
        log.rows.append(_row(t, pos[0], pos[1], heading + state.dpsi_p,
                             state.beta, state.r, V, u, y_true, gamma,
                             math.inf, "-"))
        if abs(state.e_y) > 50.0:
            diverged = True
            break
        if k == n_ctrl:
            break
        arr = state.as_array()
        for _ in range(PHYS_PER_CTRL):
            s = LinearPtState.from_array(arr)
            k1 = linear_pt_deriv(s, u, 0.0, rho, 0.0, params, V)
            s2 = LinearPtState.from_array(arr + 0.5 * DT_PHYS * k1)
            k2 = linear_pt_deriv(s2, u, 0.0, rho, 0.0, params, V)
            s3 = LinearPtState.from_array(arr + 0.5 * DT_PHYS * k2)
            k3 = linear_pt_deriv(s3, u, 0.0, rho, 0.0, params, V)
            s4 = LinearPtState.from_array(arr + DT_PHYS * k3)
            k4 = linear_pt_deriv(s4, u, 0.0, rho, 0.0, params, V)
            arr = arr + (DT_PHYS / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(arr)):
                diverged = True
                break
            gamma += V * DT_PHYS
        if diverged:
            break
        state = LinearPtState.from_array(arr)
    return log, compute_metrics(log, diverged=diverged)


def _run_lateral5dof(config: ScenarioConfig):
    params = VehicleParams(**config.options.get("params", {}))
    V = config.V
    path = build_path(config.path)
    ho = HoConfig(**config.options.get("ho_gains", {}))
    use_cbf = config.options.get("use_cbf", True)
    lookahead = config.options.get("lookahead", 8.0)
    collision_radius = config.options.get("collision_radius", 1.0)
    obstacles = [CircularObstacle(o["x"], o["y"], o.get("r", 3.0),
                                  o.get("vx", 0.0), o.get("vy", 0.0))
                 for o in config.obstacles]
    p0, h0, _ = path.eval(0.0)
    state = Lateral5DofState(x=float(p0[0]), y=float(p0[1]), psi=h0)
    gamma = 0.0
    last_cmd = 0.0
    log = TrajectoryLog()
    collision = False
    n_ctrl = int(round(config.duration / DT_CTRL))
    for k in range(n_ctrl + 1):
        t = k * DT_CTRL
        e_y, heading, _, _ = _signed_lateral_error(path, gamma, state.x, state.y)
        current = [CircularObstacle(o.x_o, o.y_o, o.r_o, o.vx, o.vy)
                   for o in obstacles]
        delta_f, _, diag = track_reference_path(
            state, path, PathProgress(gamma), lookahead,
            current if use_cbf else [], ho, params, V, last_command=last_cmd)
        last_cmd = delta_f
        log.solve_times.append(diag.solve_time)
        dmin = min((math.hypot(o.x_o - state.x, o.y_o - state.y)
                    for o in obstacles), default=math.inf)
        if dmin < collision_radius:
            collision = True
        log.rows.append(_row(t, state.x, state.y, state.psi, state.beta,
                             state.r, V, delta_f, e_y, gamma, dmin, diag.status))
        if k == n_ctrl or collision:
            break
        arr = state.as_array()
        for _ in range(PHYS_PER_CTRL):
            s = Lateral5DofState.from_array(arr)
            k1 = lateral5dof_deriv(s, delta_f, params, V)
            s2 = Lateral5DofState.from_array(arr + 0.5 * DT_PHYS * k1)
            k2 = lateral5dof_deriv(s2, delta_f, params, V)
            s3 = Lateral5DofState.from_array(arr + 0.5 * DT_PHYS * k2)
            k3 = lateral5dof_deriv(s3, delta_f, params, V)
            s4 = Lateral5DofState.from_array(arr + DT_PHYS * k3)
            k4 = lateral5dof_deriv(s4, delta_f, params, V)
            arr = arr + (DT_PHYS / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            for o in obstacles:
                o.x_o += o.vx * DT_PHYS
                o.y_o += o.vy * DT_PHYS
        state = Lateral5DofState.from_array(arr)
        gamma = min(gamma + V * DT_CTRL, path.gamma_max)
    if obstacles:
        ts = np.array([row["t_s"] for row in log.rows])
        log.actors["vehicle"] = np.column_stack(
            [ts, [row["x_m"] for row in log.rows], [row["y_m"] for row in log.rows]])
    return log, compute_metrics(log, collision=collision)


def _run_unicycle_clf(config: ScenarioConfig):
    V = config.V
    path = build_path(config.path)
    cfg = ClfCbfConfig(**config.options.get("clf_cbf", {}))
    obstacles = []
    for o in config.obstacles:
        region = EllipseRegion(np.array([o["x"], o["y"]]), o.get("theta", 0.0),
                               o.get("a", 2.0), o.get("b", 2.0))
        obstacles.append([region, np.array([o.get("vx", 0.0), o.get("vy", 0.0)])])
    p0, h0, _ = path.eval(0.0)
    state = UnicycleState(float(p0[0]), float(p0[1]), h0)
    progress = PathProgress(config.options.get("gamma_rate_0", 0.0) or 0.0,
                            gamma_d=V)
    log = TrajectoryLog()
    collision = False
    n_ctrl = int(round(config.duration / DT_CTRL))
    for k in range(n_ctrl + 1):
        t = k * DT_CTRL
        t0 = time.perf_counter()
        v, omega, eps, diag = solve_unicycle_control(
            state, path, progress, [(r, vel) for r, vel in obstacles], cfg)
        log.solve_times.append(time.perf_counter() - t0)
        e_y, heading, _, p_d = _signed_lateral_error(
            path, progress.gamma, state.x_c, state.y_c)
        dmin = math.inf
        veh = vehicle_region(state, cfg)
        for region, _vel in obstacles:
            h_ij, _ = pair_barrier(veh, region)
            dmin = min(dmin, math.hypot(region.p_c[0] - state.x_c,
                                        region.p_c[1] - state.y_c))
            if h_ij < 0.0:
                collision = True
        log.rows.append(_row(t, state.x_c, state.y_c, state.theta, 0.0, omega,
                             v, omega, e_y, progress.gamma, dmin, diag.status))
        if k == n_ctrl:
            break
        arr = state.as_array()
        for _ in range(PHYS_PER_CTRL):
            s = UnicycleState.from_array(arr)
            k1 = unicycle_deriv(s, v, omega, d=0.0)
            s2 = UnicycleState.from_array(arr + 0.5 * DT_PHYS * k1)
            k2 = unicycle_deriv(s2, v, omega, d=0.0)
            s3 = UnicycleState.from_array(arr + 0.5 * DT_PHYS * k2)
            k3 = unicycle_deriv(s3, v, omega, d=0.0)
            s4 = UnicycleState.from_array(arr + DT_PHYS * k3)
            k4 = unicycle_deriv(s4, v, omega, d=0.0)
            arr = arr + (DT_PHYS / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            for region, vel in obstacles:
                region.p_c = region.p_c + vel * DT_PHYS
        state = UnicycleState.from_array(arr)
        e = np.array([state.x_c, state.y_c]) - p_d
        progress = advance_progress(progress, e, DT_CTRL)
    return log, compute_metrics(log, collision=collision)


def _run_scripted_brake(config: ScenarioConfig):
    """Straight-line braking vehicle plus scripted crossing VRUs; the point of
    the scenario is the TTZ metric, not control."""
    opts = config.options
    x0 = opts.get("x0", -80.0)
    v0 = opts.get("v0", 15.0)
    decel = opts.get("decel", 1.5)
    if config.zone is None:
        raise ScenarioError("scripted scenario requires a conflict zone")
    zone = ConflictZone.rect(**config.zone)
    log = TrajectoryLog()
    n_ctrl = int(round(config.duration / DT_CTRL))
    ts = np.arange(n_ctrl + 1) * DT_CTRL
    # Linear speed ramp v(t) = max(0, v0 - decel*t); closed-form position.
    t_stop = v0 / decel
    xs = np.where(ts < t_stop, x0 + v0 * ts - 0.5 * decel * ts ** 2,
                  x0 + 0.5 * v0 * t_stop)
    vs = np.maximum(v0 - decel * ts, 0.0)
    for t, x, v in zip(ts, xs, vs):
        log.rows.append(_row(float(t), float(x), 0.0, 0.0, 0.0, 0.0,
                             float(v), 0.0, 0.0, float(x - x0), math.inf, "-"))
    vehicle_traj = np.column_stack([ts, xs, np.zeros_like(ts)])
    log.actors["vehicle"] = vehicle_traj
    metrics = compute_metrics(log)
    for i, vru in enumerate(config.vru):
        px = vru["x0"] + vru.get("vx", 0.0) * ts
        py = vru["y0"] + vru.get("vy", 0.0) * ts
        vru_traj = np.column_stack([ts, px, py])
        log.actors[f"vru_{i}"] = vru_traj
        ttz_v, ttz_p, events = compute_ttz(vehicle_traj, vru_traj, zone)
        log.ttz[f"vru_{i}"] = {
            "ttz_vehicle": ttz_v, "ttz_vru": ttz_p,
            "band_fractions": {f"<{int(b)}": band_fraction(ttz_v, ttz_p, b)
                               for b in (2.0, 4.0, 6.0)},
        }
        metrics.ttz_events.extend(events)
    return log, metrics


def _run_ddqn_hier(config: ScenarioConfig):
    from ..drl import HighwayEnv, load_checkpoint, run_hierarchical_episode
    checkpoint = config.options.get("checkpoint")
    if not checkpoint:
        raise ScenarioError("ddqn_hier scenario requires options.checkpoint")
    net = load_checkpoint(checkpoint)
    env = HighwayEnv()
    rng = np.random.default_rng(config.seed)
    record = run_hierarchical_episode(net, env, rng, eps=0.0)
    log = TrajectoryLog()
    log.rows.append(_row(record["steps"] * DT_DECISION, env.state.x, env.state.y,
                         env.state.psi, env.state.beta, env.state.r,
                         env.config.V, 0.0, 0.0, env.state.x, math.inf,
                         "optimal"))
    metrics = compute_metrics(log, collision=record["collision"])
    return log, metrics


def run_scenario(config: ScenarioConfig):
    """Deterministic multi-rate run; returns (TrajectoryLog, Metrics)."""
    if config.duration == 0.0:
        return TrajectoryLog(), Metrics()
    runner = {
        "cdob_pid": _run_linear_pt,
        "pid_only": _run_linear_pt,
        "clf_cbf": _run_unicycle_clf,
        "hoclf_hocbf": _run_lateral5dof,
        "scripted": _run_scripted_brake,
        "ddqn_hier": _run_ddqn_hier,
    }[config.controller]
    return runner(config)


def provenance(config: ScenarioConfig):
    return {"config": config.to_dict(), "seed": config.seed,
            "code_version": __version__}
