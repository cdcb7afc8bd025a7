import numpy as np
import pytest
from scipy.sparse import csr_matrix

from hvisolve.contact import AbstractConstants
from hvisolve.qp import (
    FactorizedStepSolver,
    NonConvergenceError,
    StepProblem,
    kkt_residual,
    predicted_rate,
    projected_gauss_seidel,
    solve_step,
)


def random_spd(n, rng, shift=None):
    M = rng.standard_normal((n, n))
    return M @ M.T + (shift if shift is not None else n) * np.eye(n)


# --- projected Gauss-Seidel ---------------------------------------------------

def test_pgs_identity_one_sweep(rng):
    b = rng.standard_normal(7)
    x, sweeps = projected_gauss_seidel(csr_matrix(np.eye(7)), b)
    assert np.all(x == b)
    assert sweeps == 1


def test_pgs_clamped_coordinate():
    A = csr_matrix(np.eye(2))
    b = np.array([-1.0, 0.5])
    lower = np.array([-0.15, -np.inf])
    x, _ = projected_gauss_seidel(A, b, lower=lower)
    assert x[0] == -0.15
    assert x[1] == 0.5


def test_pgs_matches_direct_solve(rng):
    for n in (5, 10, 30):
        A = random_spd(n, rng)
        b = rng.standard_normal(n)
        x, _ = projected_gauss_seidel(csr_matrix(A), b, tol=1e-11)
        assert np.abs(x - np.linalg.solve(A, b)).max() < 1e-8


def test_pgs_deterministic(rng):
    A = csr_matrix(random_spd(12, rng))
    b = rng.standard_normal(12)
    lower = np.full(12, -0.05)
    x1, s1 = projected_gauss_seidel(A, b, lower=lower, tol=1e-11)
    x2, s2 = projected_gauss_seidel(A, b, lower=lower, tol=1e-11)
    assert np.all(x1 == x2) and s1 == s2


def test_pgs_complementarity(rng):
    A = random_spd(15, rng)
    b = rng.standard_normal(15) * 3
    lower = np.full(15, -0.1)
    tol = 1e-11
    x, _ = projected_gauss_seidel(csr_matrix(A), b, lower=lower, tol=tol)
    grad = A @ x - b
    for i in range(15):
        if x[i] > lower[i] + 1e-9:
            assert abs(grad[i]) < 10 * tol  # inactive: stationarity
        else:
            assert grad[i] > -10 * tol  # active: multiplier pushes into the bound


def test_pgs_max_sweeps_exceeded(rng):
    A = csr_matrix(random_spd(20, rng, shift=1e-3))
    b = rng.standard_normal(20)
    with pytest.raises(NonConvergenceError) as err:
        projected_gauss_seidel(A, b, tol=1e-14, max_sweeps=2)
    assert err.value.residual is not None


def test_pgs_feasible_iterates(rng):
    A = csr_matrix(random_spd(8, rng))
    b = rng.standard_normal(8)
    lower = np.zeros(8)
    x, _ = projected_gauss_seidel(A, b, lower=lower, x0=rng.standard_normal(8))
    assert np.all(x >= 0.0)


# --- factorized front end ------------------------------------------------------

def test_factorized_matches_pgs(rng):
    A = random_spd(25, rng)
    lower = np.full(25, -np.inf)
    lower[::5] = -0.02
    b = rng.standard_normal(25)
    solver = FactorizedStepSolver(csr_matrix(A), lower)
    x_fast, lam, _ = solver.solve_qp(b, 1e-11, 100000)
    x_ref, _ = projected_gauss_seidel(csr_matrix(A), b, lower=lower, tol=1e-12)
    assert np.abs(x_fast - x_ref).max() < 1e-8
    assert kkt_residual(csr_matrix(A), b, lower, x_fast) < 1e-11


# --- one-step solves -------------------------------------------------------------

def test_solve_step_unconstrained_equals_linear_solve(rng):
    A = random_spd(12, rng)
    b = rng.standard_normal(12)
    prob = StepProblem(csr_matrix(A), b, np.full(12, -np.inf))
    rep = solve_step(prob, np.zeros(12), 1e-10, 50, 1e-11, 10000)
    assert np.abs(rep.x - np.linalg.solve(A, b)).max() < 1e-11
    assert rep.qp_solves == 1  # no nonsmooth term: exactly one inner solve
    assert rep.active_set.size == 0


def test_solve_step_1dof_inactive_bound():
    prob = StepProblem(csr_matrix(np.array([[1.0]])), np.array([1.0]), np.array([-0.15]))
    rep = solve_step(prob, np.zeros(1), 1e-10, 50, 1e-12, 1000)
    assert rep.x[0] == pytest.approx(1.0, abs=1e-12)


def test_solve_step_1dof_active_bound_kkt():
    A = csr_matrix(np.array([[1.0]]))
    prob = StepProblem(A, np.array([-1.0]), np.array([-0.15]))
    rep = solve_step(prob, np.zeros(1), 1e-10, 50, 1e-12, 1000)
    assert rep.x[0] == pytest.approx(-0.15, abs=1e-12)
    multiplier = (A @ rep.x - np.array([-1.0]))[0]
    assert multiplier == pytest.approx(0.85, abs=1e-12)
    assert list(rep.active_set) == [0]


def test_solve_step_nonsmooth_linear_selection():
    # frozen-selection iteration u_{m+1} = b - 0.3 u_m, fixed point b / 1.3
    A = csr_matrix(np.array([[1.0]]))
    b = np.array([2.0])
    prob = StepProblem(A, b, np.array([-np.inf]),
                       nonsmooth=lambda x: 0.3 * x)
    rep = solve_step(prob, np.zeros(1), 1e-12, 200, 1e-13, 1000)
    assert rep.x[0] == pytest.approx(2.0 / 1.3, rel=1e-10)
    assert rep.outer_iters > 1
    assert rep.rel_change < 1e-12


def test_solve_step_outer_cap():
    A = csr_matrix(np.array([[1.0]]))
    prob = StepProblem(A, np.array([1.0]), np.array([-np.inf]),
                       nonsmooth=lambda x: 0.9 * x)
    with pytest.raises(NonConvergenceError) as err:
        solve_step(prob, np.zeros(1), 1e-14, 3, 1e-15, 100)
    assert err.value.rel_change is not None


def test_solve_step_start_independence(rng):
    # uniqueness proxy: different feasible starts agree in the A-norm
    A = random_spd(10, rng)
    lower = np.full(10, -0.05)
    b = rng.standard_normal(10)
    prob = StepProblem(csr_matrix(A), b, lower,
                       nonsmooth=lambda x: 0.1 * np.tanh(x))
    tol = 1e-11
    rep1 = solve_step(prob, np.zeros(10), tol, 500, tol / 10, 100000)
    rep2 = solve_step(prob, rng.uniform(0.0, 1.0, 10), tol, 500, tol / 10, 100000)
    d = rep1.x - rep2.x
    assert np.sqrt(d @ (A @ d)) < 10 * tol


# --- predicted rate -----------------------------------------------------------

def test_predicted_rate_value():
    c = AbstractConstants(m_A=1.0, alpha_phi=0.3, alpha_c=0.2, c_j=1.0)
    assert predicted_rate(c) == pytest.approx(0.5)


def test_predicted_rate_zero():
    assert predicted_rate(AbstractConstants(m_A=1.0)) == 0.0


def test_predicted_rate_warns_when_not_contractive():
    c = AbstractConstants(m_A=1.0, alpha_phi=0.9, alpha_c=0.2, c_j=1.0)
    with pytest.warns(UserWarning):
        assert predicted_rate(c) == pytest.approx(1.1)
