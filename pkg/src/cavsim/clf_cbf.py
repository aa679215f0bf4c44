"""Unicycle-model CLF-CBF quadratic-program controller.

Tracking is enforced through a relaxed Lyapunov decrease on the control-point
error; safety through barrier functions between elliptical regions (vehicle
footprint vs obstacle footprints).  Each control step assembles one small QP
over (v, omega, slack) and solves it with the dense active-set solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .numerics import QpProblem, solve_qp, minimize_on_circle
from .path import ParamPath, PathProgress
from .vehicle_models import UnicycleState


@dataclass
class EllipseRegion:
    """Elliptical planar region: center p_c, orientation theta, semi-axes a >= b."""

    p_c: np.ndarray
    theta: float
    a: float
    b: float

    def __post_init__(self):
        self.p_c = np.asarray(self.p_c, dtype=float).reshape(2)
        if not (self.a >= self.b > 0.0):
            raise ValueError("semi-axes must satisfy a >= b > 0")

    def rotation(self):
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def shape_matrix(self):
        R = self.rotation()
        lam = np.diag([1.0 / self.a ** 2, 1.0 / self.b ** 2])
        return R @ lam @ R.T

    def shape_matrix_dtheta(self):
        c, s = math.cos(self.theta), math.sin(self.theta)
        R = np.array([[c, -s], [s, c]])
        dR = np.array([[-s, -c], [c, -s]])
        lam = np.diag([1.0 / self.a ** 2, 1.0 / self.b ** 2])
        return dR @ lam @ R.T + R @ lam @ dR.T


@dataclass
class ClfCbfConfig:
    alpha: float = 1.0
    beta_cbf: float = 1.0
    q: float = 100.0
    d_offset: float = 0.5
    v_max: float = 10.0
    omega_max: float = 2.0
    vehicle_a: float = 2.5
    vehicle_b: float = 1.2

    def __post_init__(self):
        if self.alpha <= 0.0 or self.beta_cbf <= 0.0 or self.q <= 0.0:
            raise ValueError("alpha, beta_cbf and q must be positive")
        if self.d_offset == 0.0:
            raise ValueError("d_offset must be nonzero (omega column degenerates "
                             "when controlling the axle center point)")
        if self.v_max <= 0.0 or self.omega_max <= 0.0:
            raise ValueError("saturation bounds must be positive")


@dataclass
class ControlDiagnostics:
    status: str = "optimal"
    eps: float = 0.0
    barrier_values: list = field(default_factory=list)
    fallback: bool = False


def input_map(theta, d):
    """Control-point velocity map: [p_dot] = G(theta) [v, omega]."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -d * s], [s, d * c]])


def control_point(state: UnicycleState, d):
    c, s = math.cos(state.theta), math.sin(state.theta)
    return np.array([state.x_c + d * c, state.y_c + d * s])


def clf_row(e, theta, path_term, config: ClfCbfConfig):
    """QP row over (v, omega, eps) encoding e'(G u - path_term) + alpha*V <= eps."""
    e = np.asarray(e, dtype=float).reshape(2)
    path_term = np.asarray(path_term, dtype=float).reshape(2)
    G = input_map(theta, config.d_offset)
    V_val = 0.5 * float(e @ e)
    row = np.array([float(e @ G[:, 0]), float(e @ G[:, 1]), -1.0])
    bound = float(e @ path_term) - config.alpha * V_val
    return row, bound


def ellipse_h(region: EllipseRegion, point):
    """Negative inside, zero on the boundary, positive outside."""
    delta = np.asarray(point, dtype=float).reshape(2) - region.p_c
    return 0.5 * float(delta @ region.shape_matrix() @ delta) - 0.5


def ellipse_boundary(region: EllipseRegion, rho):
    local = np.array([region.a * math.cos(rho), region.b * math.sin(rho)])
    return region.p_c + region.rotation() @ local


def pair_barrier(region_i: EllipseRegion, region_j: EllipseRegion):
    """Barrier between two ellipses: min over region j's boundary of region i's
    level function.  Positive iff j's boundary lies entirely outside i."""
    rho_star, h_ij = minimize_on_circle(
        lambda rho: ellipse_h(region_i, ellipse_boundary(region_j, rho)))
    return h_ij, rho_star


def barrier_gradients(region_i: EllipseRegion, region_j: EllipseRegion, rho_star):
    """(d h_ij/d p_ci, d h_ij/d theta_i, d h_ij/d p_cj) at the minimizing rho.

    The minimizer is an interior optimum of a smooth function, so the
    envelope theorem lets us differentiate the inner function at fixed rho*.
    """
    p = ellipse_boundary(region_j, rho_star)
    delta = p - region_i.p_c
    H = region_i.shape_matrix()
    grad_point = H @ delta          # gradient of h_i w.r.t. the boundary point
    grad_pci = -grad_point
    grad_theta_i = 0.5 * float(delta @ region_i.shape_matrix_dtheta() @ delta)
    grad_pcj = grad_point           # boundary point translates with center j
    return grad_pci, grad_theta_i, grad_pcj


def cbf_row(vehicle: EllipseRegion, obstacle: EllipseRegion, obstacle_velocity,
            config: ClfCbfConfig):
    """QP row over (v, omega, eps) for h_dot + beta*h >= 0 between the vehicle
    footprint and one obstacle.  Obstacle motion enters as a known drift."""
    h_ij, rho_star = pair_barrier(vehicle, obstacle)
    grad_pci, grad_theta_i, grad_pcj = barrier_gradients(vehicle, obstacle, rho_star)
    G = input_map(vehicle.theta, config.d_offset)
    coef_v = float(grad_pci @ G[:, 0])
    coef_w = float(grad_pci @ G[:, 1]) + grad_theta_i
    drift = float(grad_pcj @ np.asarray(obstacle_velocity, dtype=float).reshape(2))
    # h_dot + beta*h >= 0  ->  -(coef·u) <= drift + beta*h
    row = np.array([-coef_v, -coef_w, 0.0])
    bound = drift + config.beta_cbf * h_ij
    return row, bound, h_ij


def vehicle_region(state: UnicycleState, config: ClfCbfConfig):
    return EllipseRegion(control_point(state, config.d_offset), state.theta,
                         config.vehicle_a, config.vehicle_b)


def solve_unicycle_control(state: UnicycleState, path: ParamPath,
                           progress: PathProgress, obstacles, config: ClfCbfConfig):
    """One control step: (v, omega, eps, diagnostics).

    obstacles: list of (EllipseRegion, velocity) pairs.  Commands are
    saturated after the solve; an infeasible QP stops the vehicle.
    """
    p = control_point(state, config.d_offset)
    p_d = path.point(progress.gamma)
    e = p - p_d
    gamma_dot = progress.gamma_d / (1.0 + float(e @ e))
    path_term = path.tangent(progress.gamma) * gamma_dot

    rows, bounds = [], []
    row, bound = clf_row(e, state.theta, path_term, config)
    rows.append(row)
    bounds.append(bound)
    diag = ControlDiagnostics()
    veh = vehicle_region(state, config)
    for region, velocity in obstacles:
        row, bound, h_ij = cbf_row(veh, region, velocity, config)
        rows.append(row)
        bounds.append(bound)
        diag.barrier_values.append(h_ij)
    rows.append(np.array([0.0, 0.0, -1.0]))  # slack non-negative
    bounds.append(0.0)

    problem = QpProblem(np.diag([2.0, 2.0, 2.0 * config.q]), np.zeros(3),
                        np.array(rows), np.array(bounds))
    sol = solve_qp(problem)
    diag.status = sol.status
    if sol.status != "optimal":
        diag.fallback = True
        return 0.0, 0.0, 0.0, diag
    v, omega, eps = sol.u_star
    diag.eps = float(eps)
    v = min(max(v, -config.v_max), config.v_max)
    omega = min(max(omega, -config.omega_max), config.omega_max)
    return float(v), float(omega), float(eps), diag
