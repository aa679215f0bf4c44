"""Delay-tolerant path tracking.

A network/measurement delay is remodeled as an input disturbance and estimated
through a Q/G_n filter pair (the disturbance_estimate diagnostic).  The
feedback compensation itself predicts the output the delay withheld by passing
the steering history difference u - u(t - t_d) through the Q-filtered nominal
model, and adds that prediction to the delayed measurement.  With t_d = 0 the
compensation input is identically zero, so the loop reduces exactly to the
plain PID loop.

All blocks are discrete LTI state-space filters sharing one sample time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import csv
import itertools
import math

import numpy as np
from scipy import signal

from .vehicle_models import VehicleParams, linear_pt_matrices, V_MIN

SPEED_BUCKETS = (2.0, 5.0, 8.0, 12.0)


@dataclass
class LtiFilter:
    """Discrete-time state-space SISO filter."""

    state_matrix: np.ndarray
    input_matrix: np.ndarray
    output_matrix: np.ndarray
    feedthrough: float
    dt: float
    state: np.ndarray = None

    def __post_init__(self):
        self.state_matrix = np.atleast_2d(np.asarray(self.state_matrix, dtype=float))
        n = self.state_matrix.shape[0]
        if self.state_matrix.shape != (n, n):
            raise ValueError("state matrix must be square")
        self.input_matrix = np.asarray(self.input_matrix, dtype=float).reshape(n)
        self.output_matrix = np.asarray(self.output_matrix, dtype=float).reshape(n)
        self.feedthrough = float(np.asarray(self.feedthrough).ravel()[0])
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.state is None:
            self.state = np.zeros(n)
        else:
            self.state = np.asarray(self.state, dtype=float).reshape(n)

    def step(self, u):
        """Advance one sample; returns the output for this sample."""
        u = float(u)
        if not math.isfinite(u):
            raise ValueError("non-finite filter input")
        y = float(self.output_matrix @ self.state + self.feedthrough * u)
        self.state = self.state_matrix @ self.state + self.input_matrix * u
        return y

    def reset(self):
        self.state = np.zeros_like(self.state)


@dataclass
class PidGains:
    k_p: float
    k_i: float
    k_d: float
    V: float = 5.0

    def __post_init__(self):
        for g in (self.k_p, self.k_i, self.k_d, self.V):
            if not math.isfinite(g):
                raise ValueError("gains must be finite")


@dataclass
class PidState:
    integral: float = 0.0
    prev_error: float = 0.0
    prev_int_error: float = 0.0
    deriv_filt: float = 0.0


@dataclass
class DStabilitySpec:
    """Pole region: damping >= min_damping, Re <= -min_decay, |p| <= max_natural_freq."""

    min_damping: float = 0.5
    min_decay: float = 0.5
    max_natural_freq: float = 20.0

    def __post_init__(self):
        if not (0.0 < self.min_damping < 1.0):
            raise ValueError("min_damping must lie in (0, 1)")
        if self.min_decay < 0.0:
            raise ValueError("min_decay must be non-negative")

    def admits(self, poles):
        for p in poles:
            if p.real > -self.min_decay + 1e-12:
                return False
            if abs(p) > self.max_natural_freq + 1e-12:
                return False
            if abs(p) > 1e-12 and -p.real / abs(p) < self.min_damping - 1e-12:
                return False
        return True


@dataclass
class CdobState:
    """Filter bank of the delay-compensation loop.

    q_over_gn produces the disturbance estimate d_bar = (Q/G_n)y - Q u; the
    compensated feedback is y + G_n(Q(u - u_delayed)), i.e. the nominal
    prediction of the response the delay is still withholding.  Realizing the
    compensation on the input difference keeps the nominal model's state
    bounded (the difference has no DC content once the loop settles) and makes
    the compensation vanish identically when the delay is zero.
    """

    q_over_gn: LtiFilter
    q_filter: LtiFilter       # Q acting on the control input (estimator path)
    q_comp: LtiFilter         # Q acting on u - u_delayed (compensation path)
    nominal_plant: LtiFilter  # G_n acting on Q(u - u_delayed)
    u_history: list           # ring buffer holding the last delay_steps inputs
    delay_steps: int
    last_compensation: float = 0.0
    disturbance_estimate: float = 0.0

    def __post_init__(self):
        dts = {self.q_over_gn.dt, self.q_filter.dt, self.q_comp.dt,
               self.nominal_plant.dt}
        if len(dts) != 1:
            raise ValueError("all CDOB filters must share one dt")
        if self.delay_steps < 0:
            raise ValueError("delay_steps must be non-negative")


def _tustin_ss(A, B, C, D, dt):
    Ad, Bd, Cd, Dd, _ = signal.cont2discrete((A, B, C, D), dt, method="bilinear")
    return LtiFilter(Ad, Bd, Cd, float(np.asarray(Dd).ravel()[0]), dt)


def _plant_tf(params: VehicleParams, V):
    """Continuous steering-to-lateral-error transfer function (num, den)."""
    A, B, _, _ = linear_pt_matrices(params, V)
    C = np.array([[0.0, 0.0, 0.0, 1.0]])
    num, den = signal.ss2tf(A, B[:, :1], C, np.zeros((1, 1)))
    num = np.asarray(num).ravel()
    # Trim numerically-zero leading coefficients so the relative degree is real.
    scale = max(np.max(np.abs(num)), 1.0)
    nz = np.flatnonzero(np.abs(num) > 1e-12 * scale)
    if nz.size == 0:
        raise ValueError("steering-to-error channel is numerically zero")
    return num[nz[0]:], np.asarray(den).ravel()


def plant_relative_degree(params: VehicleParams, V):
    num, den = _plant_tf(params, V)
    return len(den) - len(num)


def _leak_integrators(den, leak):
    """Shift the (double-)integrator roots of a denominator to -leak.

    The steering-to-error channel integrates twice, so a model of it run
    open-loop inside the compensator accumulates drift that the feedback can
    never drain (the drift modes sit exactly on the stability boundary).  A
    small leak bounds that drift while leaving the response above the leak
    frequency essentially untouched.
    """
    if leak < 0.0:
        raise ValueError("leak must be non-negative")
    if leak == 0.0:
        return np.asarray(den, dtype=float)
    roots = np.roots(den)
    tol = 1e-6 * max(1.0, np.max(np.abs(roots)))
    roots[np.abs(roots) < tol] = -leak
    return float(den[0]) * np.poly(roots).real


def make_nominal_plant(params: VehicleParams, V, dt, leak=0.2):
    """Discrete model of the delay-free steering-to-lateral-error channel.

    leak (rad/s) moves the model's two free integrators just inside the
    stable half-plane; see _leak_integrators."""
    if V <= V_MIN:
        raise ValueError(f"V must exceed {V_MIN} m/s")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    num, den = _plant_tf(params, V)
    den = _leak_integrators(den, leak)
    A, B, C, D = signal.tf2ss(num, den)
    return _tustin_ss(A, B, C, D, dt)


def make_disturbance_plant(params: VehicleParams, V, dt, leak=0.2):
    """Discrete model of the known curvature-to-lateral-error channel, used to
    re-inject the road disturbance after delay compensation.

    Must share the nominal model's leak: the steering and curvature
    contributions to the lateral error are individually large and cancel, so
    modelling them with different pole sets turns the leak into a large
    un-cancelled offset instead of an O(leak * e_y) one."""
    if V <= V_MIN:
        raise ValueError(f"V must exceed {V_MIN} m/s")
    A, _, E_rho, _ = linear_pt_matrices(params, V)
    C = np.array([[0.0, 0.0, 0.0, 1.0]])
    num, den = signal.ss2tf(A, E_rho.reshape(-1, 1), C, np.zeros((1, 1)))
    num = np.asarray(num).ravel()
    scale = max(np.max(np.abs(num)), 1.0)
    nz = np.flatnonzero(np.abs(num) > 1e-12 * scale)
    num = num[nz[0]:]
    den = _leak_integrators(np.asarray(den).ravel(), leak)
    A2, B2, C2, D2 = signal.tf2ss(num, den)
    return _tustin_ss(A2, B2, C2, D2, dt)


def make_q_filter(order, cutoff, dt, min_order=2):
    """Unity-DC-gain Butterworth low-pass; order must cover the plant's
    relative degree so the estimation filter stays proper."""
    if order < min_order:
        raise ValueError(f"filter order must be >= {min_order} "
                         "(plant relative degree) for a proper estimator")
    if cutoff <= 0.0 or dt <= 0.0:
        raise ValueError("cutoff and dt must be positive")
    b, a = signal.butter(order, cutoff, analog=True)
    A, B, C, D = signal.tf2ss(b, a)
    return _tustin_ss(A, B, C, D, dt)


def make_cdob(params: VehicleParams, V, dt=0.01, q_order=2, q_cutoff=10.0,
              leak=0.2, delay_td=0.0):
    """Build the full estimator block set for one speed.

    delay_td is the round-trip delay the compensation predicts across; zero
    disables compensation (the feedback reduces to the raw measurement)."""
    if delay_td < 0.0:
        raise ValueError("delay_td must be non-negative")
    g_num, g_den = _plant_tf(params, V)
    rel_deg = len(g_den) - len(g_num)
    if q_order < rel_deg:
        raise ValueError(f"filter order must be >= {rel_deg} "
                         "(plant relative degree) for a proper estimator")
    q_num, q_den = signal.butter(q_order, q_cutoff, analog=True)
    est_num = np.polymul(q_num, g_den)
    est_den = np.polymul(q_den, g_num)
    A, B, C, D = signal.tf2ss(est_num, est_den)
    q_over_gn = _tustin_ss(A, B, C, D, dt)
    Aq, Bq, Cq, Dq = signal.tf2ss(q_num, q_den)
    q_filter = _tustin_ss(Aq, Bq, Cq, Dq, dt)
    q_comp = _tustin_ss(Aq, Bq, Cq, Dq, dt)
    nominal = make_nominal_plant(params, V, dt, leak=leak)
    delay_steps = int(round(delay_td / dt))
    return CdobState(q_over_gn, q_filter, q_comp, nominal,
                     u_history=[0.0] * delay_steps, delay_steps=delay_steps)


def cdob_step(state: CdobState, u, y_meas):
    """One sample of the delay-compensation loop.

    Updates the disturbance estimate d_bar = (Q/G_n)y - Q u and returns the
    compensated feedback y + G_n(Q(u - u_delayed)): the delayed measurement
    plus the nominal model's prediction of the steering response issued during
    the last t_d seconds that the measurement cannot contain yet.
    """
    for v in (u, y_meas):
        if not math.isfinite(float(v)):
            raise ValueError("non-finite input to delay compensation")
    q_u = state.q_filter.step(u)
    state.disturbance_estimate = state.q_over_gn.step(y_meas) - q_u
    if state.delay_steps > 0:
        u_delayed = state.u_history.pop(0)
        state.u_history.append(float(u))
    else:
        u_delayed = float(u)
    compensation = state.nominal_plant.step(
        state.q_comp.step(float(u) - u_delayed))
    state.last_compensation = compensation
    return float(y_meas) + compensation


def pid_step(error, gains: PidGains, dt, state: PidState,
             delta_min=-0.7, delta_max=0.7, deriv_cutoff=100.0,
             integral_error=None):
    """Discrete PID with trapezoidal integral and low-pass-filtered derivative,
    output clamped to the steering range.

    integral_error, when given, drives the integral term instead of `error`.
    The delay-compensated loop integrates the raw (uncompensated) error: the
    compensation high-passes the measurement, so a constant offset is invisible
    to it and only slow integral action on the raw signal can remove it.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    e_int = error if integral_error is None else integral_error
    state.integral += 0.5 * dt * (e_int + state.prev_int_error)
    state.prev_int_error = e_int
    raw_deriv = (error - state.prev_error) / dt
    a = deriv_cutoff * dt / (1.0 + deriv_cutoff * dt)
    state.deriv_filt += a * (raw_deriv - state.deriv_filt)
    state.prev_error = error
    u = gains.k_p * error + gains.k_i * state.integral + gains.k_d * state.deriv_filt
    if u > delta_max:
        # Anti-windup: back the integrator off when the output saturates.
        if gains.k_i != 0.0:
            state.integral -= (u - delta_max) / gains.k_i
        return delta_max
    if u < delta_min:
        if gains.k_i != 0.0:
            state.integral -= (u - delta_min) / gains.k_i
        return delta_min
    return float(u)


def closed_loop_poles(params: VehicleParams, V, gains: PidGains):
    """Continuous closed-loop eigenvalues: linear tracking plant + PID on the
    lateral error (the delay-compensated loop is designed delay-free).

    Zero gains return exactly the open-loop plant eigenvalues; the integrator
    state is appended only when k_i is nonzero.
    """
    if V <= V_MIN:
        raise ValueError(f"V must exceed {V_MIN} m/s")
    A, B_full, _, _ = linear_pt_matrices(params, V)
    B = B_full[:, 0]
    C = np.array([0.0, 0.0, 0.0, 1.0])
    CA = C @ A  # e_y rate row; C @ B = 0 so k_d feedback stays proper
    if gains.k_i == 0.0:
        A_cl = A - np.outer(B, gains.k_p * C + gains.k_d * CA)
    else:
        n = A.shape[0]
        A_cl = np.zeros((n + 1, n + 1))
        A_cl[:n, :n] = A - np.outer(B, gains.k_p * C + gains.k_d * CA)
        A_cl[:n, n] = -gains.k_i * B
        A_cl[n, :n] = C
    return sorted(np.linalg.eigvals(A_cl), key=lambda p: (p.real, p.imag))


@dataclass
class GainRegionResult:
    V: float
    admissible: list
    rejected: list
    minimal_triple: PidGains = None
    diagnostics: str = ""


def admissible_gain_region(params: VehicleParams, V, spec: DStabilitySpec,
                           kp_values, ki_values, kd_values):
    """Grid sweep of PID triples against the pole region; also returns the
    minimal-Euclidean-norm admissible triple (smallest gains preferred)."""
    kp_values = list(kp_values)
    ki_values = list(ki_values)
    kd_values = list(kd_values)
    if not (kp_values and ki_values and kd_values):
        raise ValueError("gain grid must be non-empty")
    admissible, rejected = [], []
    best, best_norm = None, math.inf
    for kp, ki, kd in itertools.product(kp_values, ki_values, kd_values):
        poles = closed_loop_poles(params, V, PidGains(kp, ki, kd, V))
        if spec.admits(poles):
            admissible.append((kp, ki, kd))
            norm = math.sqrt(kp * kp + ki * ki + kd * kd)
            if norm < best_norm:
                best, best_norm = PidGains(kp, ki, kd, V), norm
        else:
            rejected.append((kp, ki, kd))
    diag = "" if admissible else (
        f"no admissible triple at V={V} for damping>={spec.min_damping}, "
        f"decay>={spec.min_decay}, wn<={spec.max_natural_freq}")
    return GainRegionResult(V, admissible, rejected, best, diag)


def export_gain_region(result: GainRegionResult, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["V", "kp", "ki", "kd", "admissible"])
        for kp, ki, kd in result.admissible:
            writer.writerow([result.V, kp, ki, kd, 1])
        for kp, ki, kd in result.rejected:
            writer.writerow([result.V, kp, ki, kd, 0])


def nearest_bucket(V, buckets=SPEED_BUCKETS):
    return min(buckets, key=lambda b: abs(b - V))


def speed_schedule(rho_ref, a_lat_max, v_max):
    """Speed limited so the lateral acceleration stays within a_lat_max."""
    if a_lat_max <= 0.0:
        raise ValueError("a_lat_max must be positive")
    return min(v_max, math.sqrt(a_lat_max / max(abs(rho_ref), 1e-6)))
