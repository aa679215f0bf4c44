"""Foundation numerics: RK4 convergence, QP solver vs independent oracles,
circle minimization, finite differences."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from cavsim.numerics import (IntegrationError, QpProblem, finite_diff_jacobian,
                             minimize_on_circle, rk4_step, solve_qp)


# ---------------------------------------------------------------- RK4

def test_rk4_scalar_exponential():
    # x' = x, x(0) = 1, one step h = 0.1: RK4 matches e^0.1 to O(h^5).
    out = rk4_step(lambda x: x, np.array([1.0]), 0.1)
    assert abs(out[0] - math.exp(0.1)) < 1e-7
    assert abs(out[0] - 1.10517083) < 5e-8


def test_rk4_order_four_on_linear_system():
    # Global error over 1 s on x' = Ax shrinks ~16x when h halves.
    A = np.array([[0.0, 1.0], [-4.0, -1.0]])
    x0 = np.array([1.0, -0.5])
    exact = expm(A) @ x0

    def run(h):
        x = x0
        for _ in range(int(round(1.0 / h))):
            x = rk4_step(lambda s: A @ s, x, h)
        return np.linalg.norm(x - exact)

    e1, e2 = run(0.02), run(0.01)
    assert e1 / e2 >= 14.0


def test_rk4_rejects_bad_step_and_nonfinite():
    with pytest.raises(ValueError):
        rk4_step(lambda x: x, np.array([1.0]), 0.0)
    with pytest.raises(IntegrationError):
        rk4_step(lambda x: np.array([math.nan]), np.array([1.0]), 0.1)


# ---------------------------------------------------------------- QP oracle

def qp_oracle(problem, tol=1e-9):
    """Exact combinatorial oracle: enumerate candidate active sets, solve the
    equality-constrained problem for each, keep feasible KKT points."""
    H, f = problem.hessian, problem.linear_cost
    A, b = problem.ineq_matrix, problem.ineq_bound
    n, m = problem.n, problem.m
    best_u, best_val = None, math.inf
    for k in range(0, min(n, m) + 1):
        for subset in itertools.combinations(range(m), k):
            Aw = A[list(subset)]
            if k and np.linalg.matrix_rank(Aw) < k:
                continue
            kkt = np.block([[H, Aw.T], [Aw, np.zeros((k, k))]]) if k else H
            rhs = np.concatenate([-f, b[list(subset)]]) if k else -f
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            u, lam = sol[:n], sol[n:]
            if np.any(A @ u > b + 1e-7) or (k and np.any(lam < -1e-7)):
                continue
            val = 0.5 * u @ H @ u + f @ u
            if val < best_val - tol:
                best_u, best_val = u, val
    return best_u, best_val


def random_qp(rng, n=3, m=4):
    M = rng.normal(size=(n, n))
    H = M @ M.T + n * np.eye(n)
    f = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    # Bounds chosen so the feasible set contains a ball around a random point.
    center = rng.normal(size=n)
    b = A @ center + rng.uniform(0.5, 2.0, size=m)
    return QpProblem(H, f, A, b)


def test_qp_matches_combinatorial_oracle_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(50):
        prob = random_qp(rng)
        sol = solve_qp(prob)
        assert sol.status == "optimal"
        u_ref, val_ref = qp_oracle(prob)
        assert u_ref is not None
        assert sol.objective <= val_ref + 1e-6
        assert np.linalg.norm(sol.u_star - u_ref) < 1e-5
        assert np.all(prob.ineq_matrix @ sol.u_star <= prob.ineq_bound + 1e-7)


def test_qp_matches_dense_grid_oracle_2d():
    rng = np.random.default_rng(3)
    for _ in range(3):
        prob = random_qp(rng, n=2, m=4)
        sol = solve_qp(prob)
        span = 4.0
        xs = np.linspace(sol.u_star[0] - span, sol.u_star[0] + span, 801)
        ys = np.linspace(sol.u_star[1] - span, sol.u_star[1] + span, 801)
        X, Y = np.meshgrid(xs, ys)
        pts = np.column_stack([X.ravel(), Y.ravel()])
        feas = np.all(pts @ prob.ineq_matrix.T <= prob.ineq_bound + 1e-12, axis=1)
        vals = (0.5 * np.einsum("ij,jk,ik->i", pts, prob.hessian, pts)
                + pts @ prob.linear_cost)
        assert sol.objective <= vals[feas].min() + 1e-6


def test_qp_unconstrained_and_infeasible():
    H = np.diag([2.0, 2.0])
    sol = solve_qp(QpProblem(H, [-2.0, -4.0], np.zeros((0, 2)), []))
    assert sol.status == "optimal"
    assert np.allclose(sol.u_star, [1.0, 2.0], atol=1e-10)
    # x <= -1 and -x <= 0 (x >= 0) cannot both hold.
    sol = solve_qp(QpProblem([[2.0]], [0.0], [[1.0], [-1.0]], [-1.0, 0.0]))
    assert sol.status == "infeasible"
    assert math.isinf(sol.objective)


def test_qp_active_constraint_case():
    # min (x-2)^2 s.t. x <= 1 -> x* = 1, constraint active.
    sol = solve_qp(QpProblem([[2.0]], [-4.0], [[1.0]], [1.0]))
    assert sol.status == "optimal"
    assert abs(sol.u_star[0] - 1.0) < 1e-9
    assert sol.active_set == [0]


def test_qp_validation():
    with pytest.raises(ValueError):
        QpProblem([[1.0, 2.0], [0.0, 1.0]], [0.0, 0.0], np.zeros((0, 2)), [])
    with pytest.raises(ValueError):
        QpProblem([[1.0]], [0.0, 1.0], np.zeros((0, 1)), [])
    with pytest.raises(ValueError):
        solve_qp(QpProblem([[2.0]], [0.0], np.zeros((0, 1)), []), tol=0.0)


def test_qp_deterministic():
    prob = random_qp(np.random.default_rng(11))
    a = solve_qp(prob)
    b = solve_qp(prob)
    assert np.array_equal(a.u_star, b.u_star)
    assert a.active_set == b.active_set


# ------------------------------------------------------- circle minimization

def test_minimize_on_circle_beats_uniform_scan():
    rng = np.random.default_rng(5)
    for _ in range(10):
        a, b, c = rng.uniform(-2, 2, size=3)

        def f(rho):
            return a * math.sin(rho) + b * math.cos(2 * rho) + c * math.sin(3 * rho + 0.5)

        x, v = minimize_on_circle(f)
        scan = min(f(r) for r in np.linspace(0.0, 2 * math.pi, 360, endpoint=False))
        assert v <= scan + 1e-6
        assert 0.0 <= x < 2 * math.pi


def test_minimize_on_circle_exact_cosine():
    x, v = minimize_on_circle(lambda r: math.cos(r))
    assert abs(x - math.pi) < 1e-6
    assert abs(v + 1.0) < 1e-12


def test_minimize_on_circle_rejects_nonfinite():
    with pytest.raises(ValueError):
        minimize_on_circle(lambda r: math.inf)
    with pytest.raises(ValueError):
        minimize_on_circle(lambda r: 0.0, tol=0.0)


# ---------------------------------------------------------- finite difference

def test_finite_diff_jacobian_on_known_map():
    def f(x):
        return np.array([x[0] ** 2 + x[1], math.sin(x[1])])

    x = np.array([1.5, 0.3])
    jac = finite_diff_jacobian(f, x)
    exact = np.array([[3.0, 1.0], [0.0, math.cos(0.3)]])
    assert np.allclose(jac, exact, atol=1e-8)
    with pytest.raises(ValueError):
        finite_diff_jacobian(f, x, h=0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0), st.floats(0.01, 0.2))
def test_rk4_step_linear_in_initial_condition(x0, y0, h):
    # For x' = Ax the one-step map is linear: step(ax) = a*step(x).
    A = np.array([[0.0, 1.0], [-1.0, -0.3]])
    s = np.array([x0, y0])
    one = rk4_step(lambda x: A @ x, s, h)
    two = rk4_step(lambda x: A @ x, 2.0 * s, h)
    assert np.allclose(two, 2.0 * one, rtol=1e-12, atol=1e-12)
