"""Foundation numerics: RK4 integration, a small dense active-set QP solver,
global scalar minimization on the circle, and finite-difference Jacobians.

The QP solver targets the tiny dense problems produced by the CLF/CBF
controllers (n <= 4 variables, m <= 16 inequality rows) and is exact at that
scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import linprog


class IntegrationError(RuntimeError):
    """Raised when a derivative evaluation goes non-finite."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class QpProblem:
    """min 0.5 u^T H u + f^T u  s.t.  A u <= b  (H symmetric positive definite)."""

    hessian: np.ndarray
    linear_cost: np.ndarray
    ineq_matrix: np.ndarray
    ineq_bound: np.ndarray

    def __post_init__(self):
        self.hessian = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        self.linear_cost = np.asarray(self.linear_cost, dtype=float).ravel()
        n = self.hessian.shape[0]
        if self.hessian.shape != (n, n):
            raise ValueError("hessian must be square")
        if self.linear_cost.size != n:
            raise ValueError("linear_cost dimension mismatch")
        if not np.allclose(self.hessian, self.hessian.T, atol=1e-10):
            raise ValueError("hessian must be symmetric")
        self.ineq_matrix = np.asarray(self.ineq_matrix, dtype=float).reshape(-1, n)
        self.ineq_bound = np.asarray(self.ineq_bound, dtype=float).ravel()
        if self.ineq_bound.size != self.ineq_matrix.shape[0]:
            raise ValueError("inequality rows/bounds mismatch")

    @property
    def n(self):
        return self.hessian.shape[0]

    @property
    def m(self):
        return self.ineq_matrix.shape[0]


@dataclass
class QpSolution:
    u_star: np.ndarray
    objective: float
    status: str  # "optimal" | "infeasible" | "max_iter"
    active_set: list = field(default_factory=list)


def rk4_step(deriv_fn, state, h):
    """One classical 4th-order Runge-Kutta step of size h."""
    if h <= 0.0:
        raise ValueError("step size must be positive")
    state = np.asarray(state, dtype=float)
    k1 = np.asarray(deriv_fn(state), dtype=float)
    if not np.all(np.isfinite(k1)):
        raise IntegrationError("non-finite derivative", state=state)
    k2 = np.asarray(deriv_fn(state + 0.5 * h * k1), dtype=float)
    k3 = np.asarray(deriv_fn(state + 0.5 * h * k2), dtype=float)
    k4 = np.asarray(deriv_fn(state + h * k3), dtype=float)
    if not (np.all(np.isfinite(k2)) and np.all(np.isfinite(k3)) and np.all(np.isfinite(k4))):
        raise IntegrationError("non-finite derivative", state=state)
    return state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _objective(problem, u):
    return 0.5 * float(u @ problem.hessian @ u) + float(problem.linear_cost @ u)


def _solve_eqp(H, g, A_w):
    """Step of the equality-constrained subproblem: min 0.5 p'Hp + g'p, A_w p = 0.

    Returns (p, lam) where lam are multipliers for the working-set rows.
    """
    n = H.shape[0]
    k = A_w.shape[0]
    if k == 0:
        return np.linalg.solve(H, -g), np.zeros(0)
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = H
    kkt[:n, n:] = A_w.T
    kkt[n:, :n] = A_w
    rhs = np.concatenate([-g, np.zeros(k)])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        kkt[:n, :n] = H + 1e-9 * np.eye(n)
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def _feasible_start(problem, tol):
    """Return a feasible point, or None when the constraint set is empty."""
    u0 = np.linalg.solve(problem.hessian, -problem.linear_cost)
    if problem.m == 0 or np.all(problem.ineq_matrix @ u0 <= problem.ineq_bound + tol):
        return u0
    # Phase 1: min t  s.t.  A u - t <= b, t >= 0 (feasible iff t* ~ 0)
    n, m = problem.n, problem.m
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([problem.ineq_matrix, -np.ones((m, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=problem.ineq_bound,
                  bounds=[(None, None)] * n + [(0.0, None)], method="highs")
    if not res.success or res.x[-1] > 1e-7:
        return None
    return res.x[:n]


def solve_qp(problem, tol=1e-8, max_iter=100):
    """Primal active-set solver for small dense strictly convex QPs.

    The working set starts from the constraints active at a feasible point
    (the unconstrained minimum when it is feasible, otherwise a phase-1 LP
    solution) and is grown/shrunk one row at a time.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    H = problem.hessian
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        H = H + 1e-9 * np.eye(problem.n)
    f = problem.linear_cost
    A = problem.ineq_matrix
    b = problem.ineq_bound

    u = _feasible_start(problem, tol)
    if u is None:
        return QpSolution(np.full(problem.n, np.nan), math.inf, "infeasible", [])
    if problem.m == 0:
        return QpSolution(u, _objective(problem, u), "optimal", [])

    residual = A @ u - b
    working = [i for i in np.flatnonzero(residual > -tol)]
    # Keep the working set linearly independent and no larger than n.
    pruned = []
    for i in working:
        rows = A[pruned + [i]]
        if np.linalg.matrix_rank(rows, tol=1e-10) == len(pruned) + 1:
            pruned.append(i)
        if len(pruned) == problem.n:
            break
    working = pruned

    for _ in range(max_iter):
        g = H @ u + f
        p, lam = _solve_eqp(H, g, A[working])
        if np.linalg.norm(p) <= tol:
            if len(working) == 0 or np.all(lam >= -tol):
                return QpSolution(u, _objective(problem, u), "optimal", sorted(working))
            working.pop(int(np.argmin(lam)))
            continue
        # Step length limited by the first blocking constraint outside the set.
        alpha = 1.0
        blocking = -1
        for i in range(problem.m):
            if i in working:
                continue
            ap = A[i] @ p
            if ap > tol:
                step = (b[i] - A[i] @ u) / ap
                if step < alpha:
                    alpha = step
                    blocking = i
        u = u + alpha * p
        if blocking >= 0:
            working.append(blocking)

    return QpSolution(u, _objective(problem, u), "max_iter", sorted(working))


def _golden_section(f, lo, hi, tol):
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def minimize_on_circle(f, tol=1e-8, n_starts=12):
    """Global minimum of f over [0, 2*pi) by golden-section from equal sub-arcs."""
    if tol <= 0.0:
        raise ValueError("tol must be positive")

    def checked(rho):
        val = f(rho)
        if not math.isfinite(val):
            raise ValueError(f"non-finite objective at rho={rho}")
        return val

    width = 2.0 * math.pi / n_starts
    best_x, best_v = None, math.inf
    for k in range(n_starts):
        # Overlap neighbouring arcs so a minimum at a seam is not missed.
        lo = k * width - 0.5 * width
        hi = (k + 1) * width + 0.5 * width
        x, v = _golden_section(checked, lo, hi, tol)
        if v < best_v:
            best_x, best_v = x, v
    return best_x % (2.0 * math.pi), best_v


def finite_diff_jacobian(f, x, h=1e-6):
    """Central-difference Jacobian of a vector map f at x."""
    if h <= 0.0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(f(x), dtype=float))
    jac = np.zeros((f0.size, x.size))
    for j in range(x.size):
        step = np.zeros_like(x)
        step[j] = h
        fp = np.atleast_1d(np.asarray(f(x + step), dtype=float))
        fm = np.atleast_1d(np.asarray(f(x - step), dtype=float))
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise ValueError("non-finite function evaluation in finite difference")
        jac[:, j] = (fp - fm) / (2.0 * h)
    return jac
