"""Single-unknown benchmark with a closed-form solution.

With one degree of freedom, no constraint and no nonsmooth term, the
inequality collapses to the scalar Volterra equation

    m_A u(t) + alpha_phi u(t) + beta_phi int_0^t q(t, s) u(s) ds = f(t),

so any manufactured exact solution verifies the time schemes, the history
quadrature and the fixed-point contraction exactly, independently of the
finite element machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from .history import TimeGrid, modified_trapezoid_weights
from .schemes import FIXED_POINT, SchemeConfig, Trajectory, fixed_point_rates, run


@dataclass
class ScalarProblem:
    """Scalar instance: A u = m_A u, coupling functional
    beta_phi * y * v + alpha_phi * u * v, lagged boundary operator
    alpha_c * z with identity trace (c_j = 1), no nonsmooth term, no
    constraint."""

    m_A: float
    alpha_phi: float
    beta_phi: float
    alpha_c: float
    q: "callable"
    exact_u: "callable"
    f: "callable"
    T: float


def make_default_bench() -> ScalarProblem:
    """Exponential kernel, exact solution cos t, forcing manufactured from
    the governing equation (the convolution has a closed form)."""

    def q(t, s):
        return np.exp(-(t - s))

    def exact(t):
        return np.cos(t)

    def f(t):
        # int_0^t e^{-(t-s)} cos s ds = (cos t + sin t - e^{-t}) / 2
        return 1.3 * np.cos(t) + 0.25 * (np.cos(t) + np.sin(t) - np.exp(-t))

    return ScalarProblem(m_A=1.0, alpha_phi=0.3, beta_phi=0.5, alpha_c=0.2,
                         q=q, exact_u=exact, f=f, T=0.5)


class ScalarInstance:
    """Step-scheme adapter for a ScalarProblem (1x1 matrices)."""

    def __init__(self, problem: ScalarProblem):
        self.problem = problem
        self.ndof = 1
        self.a_base = csr_matrix(np.array([[problem.m_A]]))
        self.m_jc = csr_matrix(np.array([[1.0]]))
        self.alpha_c = problem.alpha_c
        self.lower = np.array([-np.inf])
        self.nonsmooth = None

    def load(self, t):
        return np.array([self.problem.f(t)])

    def history_rhs(self, grid, n, states):
        if n == 0:
            return np.zeros(1)
        w = modified_trapezoid_weights(grid.k, n)
        tn = grid.t(n)
        qs = np.array([self.problem.q(tn, grid.t(j)) for j in range(n)])
        return self.problem.beta_phi * np.array([(w * qs) @ states[:n, 0]])

    def phi_arg_rhs(self, w_arg, zeta):
        return self.problem.alpha_phi * w_arg

    def xnorm(self, u):
        return float(np.abs(u[0])) if u.ndim else float(abs(u))

    strain_norm = xnorm


def run_bench(problem: ScalarProblem, cfg: SchemeConfig, grid: TimeGrid) -> float:
    """Maximum nodal error of the scheme against the exact solution."""
    traj = run(cfg, ScalarInstance(problem), grid)
    exact = np.array([problem.exact_u(t) for t in grid.times])
    computed = np.array([s[0] for s in traj.states])
    return float(np.max(np.abs(computed - exact)))


def bench_error_series(problem: ScalarProblem, cfg: SchemeConfig, k_values):
    """Errors over a list of step sizes (each must divide T evenly)."""
    errors = []
    for k in k_values:
        N = round(problem.T / k)
        if abs(N * k - problem.T) > 1e-9 * problem.T:
            raise ValueError(f"step size {k} does not divide the final time {problem.T}")
        errors.append(run_bench(problem, cfg, TimeGrid(problem.T, N)))
    return errors


def measure_fp_rate(problem: ScalarProblem, grid: TimeGrid,
                    cfg: SchemeConfig = None):
    """Per-step geometric contraction rates of the fixed-point iteration
    on the bench; requires the contraction condition to hold."""
    rho = (problem.alpha_phi + problem.alpha_c) / problem.m_A
    if rho >= 1.0:
        raise ValueError(
            f"fixed-point iteration is not contractive: predicted rate {rho:.3f} >= 1"
        )
    if cfg is None:
        cfg = SchemeConfig(scheme=FIXED_POINT)
    elif cfg.scheme != FIXED_POINT:
        raise ValueError("rate measurement requires the fixed-point scheme")
    traj = run(cfg, ScalarInstance(problem), grid)
    return fixed_point_rates(traj)
