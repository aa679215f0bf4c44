"""Plant models: unicycle, 5-DOF lateral dynamic model, linear path-tracking
model, and the extended nonlinear single-track model with coupled Dugoff-type
tires and wheel rotation dynamics.

All derivative functions are pure; integration is left to the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

V_MIN = 0.1  # lateral dynamics singularity guard [m/s]


class SpeedSingularityError(ValueError):
    """Lateral model evaluated below the low-speed guard."""


@dataclass
class VehicleParams:
    """Mass/inertia/tire/geometry constants shared by every plant model.

    Lateral parameters follow the simulation tables; longitudinal tire and
    wheel values are repo defaults (declared in config, echoed into run logs)
    since the source material never lists them.
    """

    m: float = 3000.0            # mass [kg]
    I_z: float = 5113.0          # yaw inertia [kg m^2]
    C_f: float = 3.0e5           # front cornering stiffness [N/rad]
    C_r: float = 3.0e5           # rear cornering stiffness [N/rad]
    l_f: float = 2.0             # CG to front axle [m]
    l_r: float = 2.0             # CG to rear axle [m]
    C_x: float = 8.0e4           # longitudinal tire stiffness [N]
    C_y: float = 1.5e5           # lateral tire stiffness [N/rad]
    mu: float = 0.9              # road friction [-]
    F_zf: float = 7357.5         # front axle vertical load [N]
    F_zr: float = 7357.5         # rear axle vertical load [N]
    R_f: float = 0.3             # front tire radius [m]
    R_r: float = 0.3             # rear tire radius [m]
    I_wf: float = 1.5            # front wheel inertia [kg m^2]
    I_wr: float = 1.5            # rear wheel inertia [kg m^2]
    delta_f_max: float = 0.7     # steer limits [rad]
    delta_f_min: float = -0.7
    K: float = 1.0               # preview scheduling constant [s]
    t_d: float = 0.3             # loop time delay [s]

    def __post_init__(self):
        positive = ("m", "I_z", "C_f", "C_r", "l_f", "l_r",
                    "R_f", "R_r", "I_wf", "I_wr")
        for name in positive:
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.mu <= 1.2:
            raise ValueError("mu must lie in (0, 1.2]")
        if self.delta_f_min >= self.delta_f_max:
            raise ValueError("steer limits inverted")


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = (a + math.pi) % (2.0 * math.pi) - math.pi
    return math.pi if a == -math.pi else a


@dataclass
class UnicycleState:
    x_c: float = 0.0
    y_c: float = 0.0
    theta: float = 0.0

    def as_array(self):
        return np.array([self.x_c, self.y_c, self.theta])

    @classmethod
    def from_array(cls, arr):
        return cls(float(arr[0]), float(arr[1]), wrap_angle(float(arr[2])))


@dataclass
class Lateral5DofState:
    beta: float = 0.0
    r: float = 0.0
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0

    def as_array(self):
        return np.array([self.beta, self.r, self.x, self.y, self.psi])

    @classmethod
    def from_array(cls, arr):
        return cls(*(float(v) for v in arr))


@dataclass
class LinearPtState:
    beta: float = 0.0
    r: float = 0.0
    dpsi_p: float = 0.0
    e_y: float = 0.0

    def as_array(self):
        return np.array([self.beta, self.r, self.dpsi_p, self.e_y])

    @classmethod
    def from_array(cls, arr):
        return cls(*(float(v) for v in arr))


@dataclass
class ExtendedState:
    beta: float = 0.0
    V: float = 5.0
    r: float = 0.0
    psi: float = 0.0
    X: float = 0.0
    Y: float = 0.0
    dw_f: float = 0.0
    dw_r: float = 0.0

    def as_array(self):
        return np.array([self.beta, self.V, self.r, self.psi,
                         self.X, self.Y, self.dw_f, self.dw_r])

    @classmethod
    def from_array(cls, arr):
        return cls(*(float(v) for v in arr))


@dataclass
class TireForces:
    F_x: float
    F_y: float


def _check_speed(V):
    if V <= V_MIN:
        raise SpeedSingularityError(f"lateral model singular at V={V} <= {V_MIN} m/s")


def unicycle_deriv(state: UnicycleState, v, omega, d=0.0):
    """Offset-point unicycle kinematics; d=0 recovers the center-point model."""
    c, s = math.cos(state.theta), math.sin(state.theta)
    return np.array([v * c - d * omega * s, v * s + d * omega * c, omega])


def lateral_coeffs(params: VehicleParams, V):
    """Linear lateral-dynamics coefficients (A11..A22, B1, B2) at speed V."""
    _check_speed(V)
    a11 = (-params.C_f - params.C_r) / (params.m * V)
    a12 = -1.0 + (params.C_r * params.l_r - params.C_f * params.l_f) / (params.m * V * V)
    a21 = (params.C_r * params.l_r - params.C_f * params.l_f) / params.I_z
    a22 = (-params.C_f * params.l_f ** 2 - params.C_r * params.l_r ** 2) / (params.I_z * V)
    b1 = params.C_f / (params.m * V)
    b2 = params.C_f * params.l_f / params.I_z
    return a11, a12, a21, a22, b1, b2


def lateral5dof_deriv(state: Lateral5DofState, delta_f, params: VehicleParams, V):
    a11, a12, a21, a22, b1, b2 = lateral_coeffs(params, V)
    course = state.beta + state.psi
    return np.array([
        a11 * state.beta + a12 * state.r + b1 * delta_f,
        a21 * state.beta + a22 * state.r + b2 * delta_f,
        V * math.cos(course),
        V * math.sin(course),
        state.r,
    ])


def linear_pt_matrices(params: VehicleParams, V):
    """State/input/disturbance matrices of the linear path-tracking model."""
    a11, a12, a21, a22, b1, _ = lateral_coeffs(params, V)
    l_s = params.K * V
    A = np.array([
        [a11, a12, 0.0, 0.0],
        [a21, a22, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [V, l_s, V, 0.0],
    ])
    B = np.array([
        [params.C_f / (params.m * V), params.C_r / (params.m * V)],
        [params.C_f * params.l_f / params.I_z, params.C_r * params.l_r / params.I_z],
        [0.0, 0.0],
        [0.0, 0.0],
    ])
    E_rho = np.array([0.0, 0.0, -V, -l_s * V])
    E_mzd = np.array([0.0, 1.0 / params.I_z, 0.0, 0.0])
    return A, B, E_rho, E_mzd


def linear_pt_deriv(state: LinearPtState, delta_f, delta_r, rho_ref, M_zd,
                    params: VehicleParams, V):
    A, B, E_rho, E_mzd = linear_pt_matrices(params, V)
    return (A @ state.as_array() + B @ np.array([delta_f, delta_r])
            + E_rho * rho_ref + E_mzd * M_zd)


_ZERO_SLIP_EPS = 1e-9
_SLIP_CLAMP = 1.0 - 1e-6


def dugoff_forces(s, alpha, params: VehicleParams, F_z) -> TireForces:
    """Coupled longitudinal/lateral tire forces (modified Dugoff form).

    Evaluated on slip magnitudes with signs reapplied so that F_x is odd in s
    (at alpha=0) and F_y odd in alpha (at s=0).
    """
    if abs(s) > _SLIP_CLAMP:
        raise ValueError(f"longitudinal slip {s} outside (-1, 1) domain")
    if F_z <= 0.0:
        raise ValueError("F_z must be positive")
    mu = params.mu
    ta = math.tan(alpha)
    sa, taa = abs(s), abs(ta)
    denom = 2.0 * math.hypot(params.C_x * sa, params.C_y * taa)
    if denom < _ZERO_SLIP_EPS:
        return TireForces(0.0, 0.0)  # Z -> +inf, f(Z) = 1, but both slips vanish
    Z = mu * F_z * (1.0 - sa) / denom
    fZ = Z * (2.0 - Z) if Z < 1.0 else 1.0
    g_x = (1.15 - 0.75 * mu) * sa * sa - (1.63 - 0.75 * mu) * sa + 1.5
    g_y = (mu - 1.6) * taa + 1.5
    F_x = math.copysign(params.C_x * sa / (1.0 - sa) * fZ * g_x, s) if sa > 0 else 0.0
    F_y = math.copysign(params.C_y * taa / (1.0 - sa) * fZ * g_y, ta) if taa > 0 else 0.0
    return TireForces(F_x, F_y)


def wheel_deriv(dw, M_drive, F_x, R, I_w):
    """Deviated wheel angular acceleration."""
    if I_w <= 0.0:
        raise ValueError("I_w must be positive")
    return (M_drive - F_x * R) / I_w


def wheel_speed(dw, V_axle_long, R):
    """Total wheel angular velocity from the deviated component."""
    if R <= 0.0:
        raise ValueError("R must be positive")
    return dw + V_axle_long / R


def _longitudinal_slip(omega, R, V_long):
    circ = omega * R
    denom = max(abs(circ), abs(V_long), 1e-6)
    s = (circ - V_long) / denom
    return max(-_SLIP_CLAMP, min(_SLIP_CLAMP, s))


def axle_kinematics(state: ExtendedState, delta_f, delta_r, params: VehicleParams):
    """Axle velocities, slip angles and longitudinal slips from the CG state.

    Returned slip angles follow alpha = (axle slip angle) - delta; the force
    assembly negates them before the tire model so lateral force opposes slip.
    """
    _check_speed(state.V)
    vx = state.V * math.cos(state.beta)
    vy_f = state.V * math.sin(state.beta) + params.l_f * state.r
    vy_r = state.V * math.sin(state.beta) - params.l_r * state.r
    beta_f = math.atan2(vy_f, vx)
    beta_r = math.atan2(vy_r, vx)
    alpha_f = beta_f - delta_f
    alpha_r = beta_r - delta_r
    # Axle longitudinal velocity resolved into the (steered) wheel frame.
    V_fxf = vx * math.cos(delta_f) + vy_f * math.sin(delta_f)
    V_rxr = vx * math.cos(delta_r) + vy_r * math.sin(delta_r)
    s_f = _longitudinal_slip(wheel_speed(state.dw_f, V_fxf, params.R_f), params.R_f, V_fxf)
    s_r = _longitudinal_slip(wheel_speed(state.dw_r, V_rxr, params.R_r), params.R_r, V_rxr)
    return alpha_f, alpha_r, s_f, s_r, V_fxf, V_rxr


def extended_deriv(state: ExtendedState, delta_f=0.0, delta_r=0.0,
                   M_drive_f=0.0, M_drive_r=0.0, F_load=0.0, M_zd=0.0,
                   params: VehicleParams = None):
    """Full nonlinear single-track derivative: tire slips -> coupled tire
    forces -> body-frame force/moment assembly -> (beta, V, r) dynamics, plus
    yaw/position kinematics and both wheel rotation states."""
    if params is None:
        params = VehicleParams()
    _check_speed(state.V)
    alpha_f, alpha_r, s_f, s_r, _, _ = axle_kinematics(state, delta_f, delta_r, params)
    # Tire slip angle for the force model is delta - axle slip (restoring).
    tf = dugoff_forces(s_f, -alpha_f, params, params.F_zf)
    tr = dugoff_forces(s_r, -alpha_r, params, params.F_zr)
    F_xf, F_yf = tf.F_x, tf.F_y
    F_xr, F_yr = tr.F_x, tr.F_y

    m, I_z, V, beta = params.m, params.I_z, state.V, state.beta
    sdf, cdf = math.sin(delta_f - beta), math.cos(delta_f - beta)
    sdr, cdr = math.sin(delta_r - beta), math.cos(delta_r - beta)
    beta_dot = ((sdf * F_xf + sdr * F_xr + cdf * F_yf + cdr * F_yr) / (m * V)
                + math.sin(beta) * F_load / (m * V) - state.r)
    V_dot = ((cdf * F_xf + cdr * F_xr - sdf * F_yf - sdr * F_yr) / m
             - math.cos(beta) * F_load / m)
    r_dot = (params.l_f * math.sin(delta_f) * F_xf - params.l_r * math.sin(delta_r) * F_xr
             + params.l_f * math.cos(delta_f) * F_yf - params.l_r * math.cos(delta_r) * F_yr
             + M_zd) / I_z
    course = beta + state.psi
    return np.array([
        beta_dot,
        V_dot,
        r_dot,
        state.r,
        V * math.cos(course),
        V * math.sin(course),
        wheel_deriv(state.dw_f, M_drive_f, F_xf, params.R_f, params.I_wf),
        wheel_deriv(state.dw_r, M_drive_r, F_xr, params.R_r, params.I_wr),
    ])
