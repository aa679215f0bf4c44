"""Decision-level environments for the value-based agents.

GridWorld is a small deterministic grid with one patrolling obstacle.
HighwayEnv is the hierarchical lane-selection environment: the agent picks a
lane every 200 ms while a steering QP tracks the chosen lane at 100 Hz on the
5-DOF lateral vehicle model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from ..hoclf_hocbf import HoConfig, assemble_and_solve
from ..vehicle_models import Lateral5DofState, VehicleParams, lateral5dof_deriv

GRID_ACTIONS = ("forward", "back", "left", "right", "stay")
GRID_MOVES = ((1, 0), (-1, 0), (0, 1), (0, -1), (0, 0))
HIGHWAY_ACTIONS = ("idle", "left_change", "right_change")

REWARD_GOAL_GRID = 25.0
REWARD_COLLISION_GRID = -300.0
REWARD_MOVE_GRID = -1.0
REWARD_GOAL_HWY = 50.0
REWARD_COLLISION_HWY = -100.0
REWARD_LANE_CHANGE = -0.5


class GridWorld:
    """Deterministic grid: walls block, the obstacle cycles a scripted patrol."""

    def __init__(self, width=8, height=6, start=(0, 0), goal=(7, 5),
                 patrol=None, max_steps=200):
        self.width = width
        self.height = height
        self.start = tuple(start)
        self.goal_cell = tuple(goal)
        if patrol is None:
            patrol = [(4, 1), (4, 2), (4, 3), (4, 4), (4, 3), (4, 2)]
        self.patrol = [tuple(c) for c in patrol]
        self.max_steps = max_steps
        for cell in [self.start, self.goal_cell] + self.patrol:
            if not (0 <= cell[0] < width and 0 <= cell[1] < height):
                raise ValueError(f"cell {cell} out of bounds")
        self.reset()

    @property
    def n_actions(self):
        return len(GRID_ACTIONS)

    @property
    def obs_size(self):
        return 4

    def reset(self):
        self.vehicle_cell = self.start
        self.phase = 0
        self.steps = 0
        return self.observe()

    @property
    def obstacle_cell(self):
        return self.patrol[self.phase % len(self.patrol)]

    def observe(self):
        scale = float(max(self.width, self.height))
        vx, vy = self.vehicle_cell
        gx, gy = self.goal_cell
        ox, oy = self.obstacle_cell
        return np.array([gx - vx, gy - vy, ox - vx, oy - vy]) / scale

    def step(self, action):
        dx, dy = GRID_MOVES[action]
        nx = min(max(self.vehicle_cell[0] + dx, 0), self.width - 1)
        ny = min(max(self.vehicle_cell[1] + dy, 0), self.height - 1)
        self.vehicle_cell = (nx, ny)
        self.steps += 1
        if self.vehicle_cell == self.goal_cell:
            return self.observe(), REWARD_GOAL_GRID, True
        if self.vehicle_cell == self.obstacle_cell:
            return self.observe(), REWARD_COLLISION_GRID, True
        self.phase += 1
        if self.vehicle_cell == self.obstacle_cell:
            return self.observe(), REWARD_COLLISION_GRID, True
        return self.observe(), REWARD_MOVE_GRID, self.steps >= self.max_steps


def grid_env_step(env: GridWorld, action):
    return env.step(action)


@dataclass
class HighwayObstacle:
    lane: int
    x: float
    speed: float = 0.0


@dataclass
class HighwayEnvConfig:
    lane_count: int = 2
    lane_width: float = 4.0
    road_length: float = 120.0
    V: float = 5.0
    dt_control: float = 0.01
    steps_per_decision: int = 20
    lookahead: float = 8.0
    progress_coef: float = 0.1
    collision_dx: float = 4.0
    collision_dy: float = 2.0
    max_decisions: int = 200
    obstacles: list = field(default_factory=lambda: [
        HighwayObstacle(0, 50.0), HighwayObstacle(1, 85.0)])
    x_jitter: float = 5.0


class HighwayEnv:
    """Two-level highway: discrete lane decisions at 5 Hz, steering QP and
    5-DOF integration at 100 Hz inside each decision step."""

    def __init__(self, config=None, params=None, ho_config=None):
        self.config = config or HighwayEnvConfig()
        self.params = params or VehicleParams()
        self.ho_config = ho_config or HoConfig()
        self.reset()

    @property
    def n_actions(self):
        return len(HIGHWAY_ACTIONS)

    @property
    def obs_size(self):
        return 25

    def lane_center(self, lane):
        return lane * self.config.lane_width

    def reset(self, rng=None):
        cfg = self.config
        self.state = Lateral5DofState(y=self.lane_center(0))
        self.target_lane = 0
        self.last_command = 0.0
        self.decisions = 0
        self.obstacles = []
        for obs in cfg.obstacles:
            x = obs.x
            if rng is not None and cfg.x_jitter > 0.0:
                x += float(rng.uniform(-cfg.x_jitter, cfg.x_jitter))
            self.obstacles.append(HighwayObstacle(obs.lane, x, obs.speed))
        return self.observe()

    def observe(self):
        cfg = self.config
        rows = np.zeros((5, 5))
        rows[0] = [1.0, self.state.x / cfg.road_length,
                   self.state.y / (cfg.lane_count * cfg.lane_width),
                   cfg.V / 10.0, 0.0]
        for k, obs in enumerate(self.obstacles[:4]):
            rows[k + 1] = [1.0, (obs.x - self.state.x) / 50.0,
                           (self.lane_center(obs.lane) - self.state.y) / 10.0,
                           (obs.speed - cfg.V) / 10.0, 0.0]
        return rows.ravel()

    def _collision(self):
        cfg = self.config
        for obs in self.obstacles:
            if (abs(obs.x - self.state.x) < cfg.collision_dx
                    and abs(self.lane_center(obs.lane) - self.state.y) < cfg.collision_dy):
                return True
        return False

    def step(self, action):
        """One decision period: set the target lane, run the low-level loop,
        assemble the reward from its logged components."""
        cfg = self.config
        x_prev = self.state.x
        lane_changed = False
        if action == 1 and self.target_lane + 1 < cfg.lane_count:
            self.target_lane += 1
            lane_changed = True
        elif action == 2 and self.target_lane > 0:
            self.target_lane -= 1
            lane_changed = True
        # Off-edge requests fall through to idle but still pay the penalty.
        components = {"goal": 0.0, "collision": 0.0, "progress": 0.0,
                      "lane_change": REWARD_LANE_CHANGE if action != 0 else 0.0}
        done = False
        info = {"fallbacks": 0, "collision": False, "reached": False}
        dt = cfg.dt_control
        for _ in range(cfg.steps_per_decision):
            goal = (self.state.x + cfg.lookahead, self.lane_center(self.target_lane))
            delta_f, _, diag = assemble_and_solve(
                self.state, goal, [], self.ho_config, self.params, cfg.V,
                last_command=self.last_command)
            if diag.fallback:
                info["fallbacks"] += 1
            self.last_command = delta_f
            arr = self.state.as_array()
            k1 = lateral5dof_deriv(self.state, delta_f, self.params, cfg.V)
            s2 = Lateral5DofState.from_array(arr + 0.5 * dt * k1)
            k2 = lateral5dof_deriv(s2, delta_f, self.params, cfg.V)
            s3 = Lateral5DofState.from_array(arr + 0.5 * dt * k2)
            k3 = lateral5dof_deriv(s3, delta_f, self.params, cfg.V)
            s4 = Lateral5DofState.from_array(arr + dt * k3)
            k4 = lateral5dof_deriv(s4, delta_f, self.params, cfg.V)
            self.state = Lateral5DofState.from_array(
                arr + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
            for obs in self.obstacles:
                obs.x += obs.speed * dt
            if self._collision():
                components["collision"] = REWARD_COLLISION_HWY
                info["collision"] = True
                done = True
                break
        components["progress"] = cfg.progress_coef * (self.state.x - x_prev)
        if not done and self.state.x >= cfg.road_length:
            components["goal"] = REWARD_GOAL_HWY
            info["reached"] = True
            done = True
        self.decisions += 1
        if self.decisions >= cfg.max_decisions:
            done = True
        reward = sum(components.values())
        info["components"] = components
        info["lane"] = self.target_lane
        return self.observe(), reward, done, info


def highway_env_step(env: HighwayEnv, action, dt_decision=0.2):
    expected = env.config.steps_per_decision * env.config.dt_control
    if abs(dt_decision - expected) > 1e-9:
        raise ValueError(f"decision period is fixed at {expected} s")
    return env.step(action)
