"""Bound-constrained SPD quadratic programs arising from one time step.

Each step requires

    min  1/2 v' A v - b' v   subject to  v_i >= l_i on the contact dofs,

optionally inside an outer loop that refreshes the frozen nonsmooth
boundary traction.  The certifying iteration is projected Gauss-Seidel
(fixed ascending dof order, per-coordinate clamping, projected-KKT
residual stopping).  For large systems each QP is first reduced exactly
to its dual complementarity problem on the handful of constrained dofs
(via a cached sparse factorization of A), which projected Gauss-Seidel
then solves; the assembled primal solution is always re-certified against
the full projected-KKT residual.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import splu

from .contact import AbstractConstants


class NonConvergenceError(RuntimeError):
    """An iterative solve hit its iteration cap.

    Carries the last relative change / residual and the iteration counts
    for diagnosis.
    """

    def __init__(self, message, *, rel_change=None, residual=None,
                 iterations=None, step=None):
        super().__init__(message)
        self.rel_change = rel_change
        self.residual = residual
        self.iterations = iterations
        self.step = step


@njit(cache=True)
def _pgs_kernel(indptr, indices, data, b, lower, x, tol, max_sweeps):
    """Gauss-Seidel sweeps with clamping; returns (sweeps, residual,
    energy_monotone).  One combined pass per sweep evaluates both the
    projected-KKT residual and the QP energy."""
    n = b.shape[0]
    energy_prev = np.inf
    monotone = True
    res = np.inf
    sweeps = 0
    for sweep in range(max_sweeps):
        for i in range(n):
            s = 0.0
            diag = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j == i:
                    diag = data[p]
                else:
                    s += data[p] * x[j]
            xi = (b[i] - s) / diag
            if xi < lower[i]:
                xi = lower[i]
            x[i] = xi
        res = 0.0
        energy = 0.0
        for i in range(n):
            ax = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                ax += data[p] * x[indices[p]]
            energy += 0.5 * x[i] * ax - b[i] * x[i]
            z = x[i] - (ax - b[i])
            if z < lower[i]:
                z = lower[i]
            r = abs(x[i] - z)
            if r > res:
                res = r
        if energy > energy_prev + 1e-12 * (1.0 + abs(energy_prev)):
            monotone = False
        energy_prev = energy
        sweeps = sweep + 1
        if res < tol:
            break
    return sweeps, res, monotone


def projected_gauss_seidel(A, b, lower=None, x0=None, tol=1e-10,
                           max_sweeps=100000, check_energy=True):
    """Solve the bound-constrained SPD QP by projected Gauss-Seidel.

    :param A: sparse SPD matrix (csr).
    :param b: right-hand side of the unconstrained stationarity A x = b.
    :param lower: per-dof lower bounds, -inf where unconstrained.
    :param x0: start vector, clamped to the bounds (zeros by default).
    :param tol: projected-KKT residual ||x - median(l, x - (Ax-b))||_inf.
    :param max_sweeps: sweep cap; exceeding it raises NonConvergenceError.
    :return: (x, sweeps).
    """
    A = csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if lower is None:
        lower = np.full(n, -np.inf)
    else:
        lower = np.asarray(lower, dtype=float)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    np.maximum(x, lower, out=x)

    sweeps, res, monotone = _pgs_kernel(
        A.indptr, A.indices, A.data, b, lower, x, float(tol), int(max_sweeps)
    )
    if check_energy:
        assert monotone, "projected Gauss-Seidel energy increased between sweeps"
    if res >= tol:
        raise NonConvergenceError(
            f"projected Gauss-Seidel stalled at residual {res:.3e} "
            f"after {sweeps} sweeps (tol {tol:.3e})",
            residual=res, iterations=sweeps,
        )
    return x, sweeps


def kkt_residual(A, b, lower, x):
    """Projected-KKT residual of the bound-constrained QP at x."""
    grad = A @ x - b
    proj = np.maximum(lower, x - grad)
    return float(np.max(np.abs(x - proj))) if x.size else 0.0


class FactorizedStepSolver:
    """Direct-factorization front end for the per-step QPs.

    A is factorized once; for constrained problems the columns of
    A^{-1} restricted to the constrained dofs are cached, so every QP
    reduces to a small dense complementarity problem

        w = S lam + (x_unc - l)_C >= 0,   lam >= 0,   lam' w = 0,

    with S the boundary Schur complement, solved by projected
    Gauss-Seidel.  Safe to reuse across all steps of a run because A and
    the bounds never change.
    """

    def __init__(self, A, lower):
        self.A = csr_matrix(A)
        self.n = self.A.shape[0]
        self.lower = np.asarray(lower, dtype=float)
        self.constrained = np.flatnonzero(np.isfinite(self.lower))
        self._lu = splu(self.A.tocsc())
        if self.constrained.size:
            rhs = np.zeros((self.n, self.constrained.size))
            rhs[self.constrained, np.arange(self.constrained.size)] = 1.0
            self.W = self._lu.solve(rhs)
            S = self.W[self.constrained]
            self.S = csr_matrix(0.5 * (S + S.T))
        else:
            self.W = None
            self.S = None
        self._last_lam = None

    def solve_unconstrained(self, b):
        return self._lu.solve(np.asarray(b, dtype=float))

    def solve_qp(self, b, inner_tol, inner_max):
        """Solve the QP; returns (x, lam, sweeps).  lam holds the
        multipliers of the active bounds (zeros elsewhere)."""
        x = self.solve_unconstrained(b)
        if not self.constrained.size:
            return x, np.zeros(0), 0
        lc = self.lower[self.constrained]
        q = x[self.constrained] - lc
        if np.all(q >= 0):
            self._last_lam = None
            return x, np.zeros(self.constrained.size), 0

        lam0 = self._last_lam
        sweeps_total = 0
        dual_tol = inner_tol * 1e-2
        for _ in range(3):
            lam, sweeps = projected_gauss_seidel(
                self.S, -q, lower=np.zeros(self.constrained.size),
                x0=lam0, tol=dual_tol, max_sweeps=inner_max,
            )
            sweeps_total += sweeps
            x_try = x + self.W @ lam
            np.maximum(x_try, self.lower, out=x_try)
            if kkt_residual(self.A, b, self.lower, x_try) < inner_tol:
                self._last_lam = lam
                return x_try, lam, sweeps_total
            lam0 = lam
            dual_tol *= 1e-3
        # Last resort: polish in the full space.
        x_try, sweeps = projected_gauss_seidel(
            self.A, b, lower=self.lower, x0=x_try, tol=inner_tol,
            max_sweeps=inner_max,
        )
        self._last_lam = None
        return x_try, lam, sweeps_total + sweeps


@dataclass
class StepProblem:
    """One time-step inequality in matrix form.

    nonsmooth, when present, maps the current iterate to the dof-space
    load of the frozen boundary-traction selection.  When that load is
    supported on the constrained dofs and depends on the iterate only
    through them (the contact case), nonsmooth_small gives the same map
    restricted to nonsmooth_support, which lets the traction loop run in
    the small boundary space with a single factorized solve.
    """

    A: csr_matrix
    rhs: np.ndarray
    lower: np.ndarray
    nonsmooth: "callable | None" = None
    solver: "FactorizedStepSolver | None" = None
    nonsmooth_small: "callable | None" = None
    nonsmooth_support: "np.ndarray | None" = None


@dataclass
class SolveReport:
    x: np.ndarray
    outer_iters: int
    inner_sweeps_total: int
    rel_change: float
    active_set: np.ndarray
    kkt_residual: float
    qp_solves: int


def solve_step(problem: StepProblem, start, outer_tol, outer_max,
               inner_tol, inner_max) -> SolveReport:
    """Solve one step inequality.

    Without a nonsmooth term a single QP solve is performed.  Otherwise
    the traction is frozen at the previous iterate and refreshed until the
    relative (Euclidean) change of successive iterates drops below
    outer_tol; each frozen problem is the QP

        min 1/2 v' A v - (rhs - xi(u_prev))' v   s.t.  v >= lower.
    """
    solver = problem.solver
    if solver is None:
        solver = FactorizedStepSolver(problem.A, problem.lower)

    x = np.array(start, dtype=float)
    np.maximum(x, problem.lower, out=x)
    sweeps_total = 0
    qp_solves = 0

    if problem.nonsmooth is None:
        x, lam, sweeps = solver.solve_qp(problem.rhs, inner_tol, inner_max)
        res = kkt_residual(problem.A, problem.rhs, problem.lower, x)
        active = _active_set(solver, x, problem.lower)
        return SolveReport(x, 1, sweeps, 0.0, active, res, 1)

    fast = (
        problem.nonsmooth_small is not None
        and problem.nonsmooth_support is not None
        and solver.constrained.size
        and np.array_equal(problem.nonsmooth_support, solver.constrained)
    )
    if fast:
        return _solve_step_boundary(problem, solver, x, outer_tol, outer_max,
                                    inner_tol, inner_max)

    rel = np.inf
    b_eff = problem.rhs
    for it in range(1, outer_max + 1):
        b_eff = problem.rhs - problem.nonsmooth(x)
        x_new, lam, sweeps = solver.solve_qp(b_eff, inner_tol, inner_max)
        sweeps_total += sweeps
        qp_solves += 1
        change = float(np.linalg.norm(x_new - x))
        denom = float(np.linalg.norm(x_new))
        rel = change / denom if denom > 0 else change
        x = x_new
        if rel < outer_tol:
            res = kkt_residual(problem.A, b_eff, problem.lower, x)
            active = _active_set(solver, x, problem.lower)
            return SolveReport(x, it, sweeps_total, rel, active, res, qp_solves)
    raise NonConvergenceError(
        f"traction fixed point did not converge in {outer_max} iterations "
        f"(last relative change {rel:.3e})",
        rel_change=rel, iterations=outer_max,
    )


def _solve_step_boundary(problem, solver, x, outer_tol, outer_max,
                         inner_tol, inner_max):
    """Traction loop reduced to the constrained boundary dofs.

    With xi supported on the constrained dofs c and W = A^{-1} restricted
    to their columns, every frozen iterate is

        x = x0 - W xi_c + W lam = x0 + W (lam - xi_c),

    so only one full factorized solve (for x0) is needed; the multiplier
    LCP and the traction refresh act on |c|-sized vectors.
    """
    c = solver.constrained
    lc = problem.lower[c]
    x0 = solver.solve_unconstrained(problem.rhs)
    q0 = x0[c] - lc
    S = solver.S
    lam = solver._last_lam if solver._last_lam is not None else np.zeros(c.size)
    sweeps_total = 0
    qp_solves = 0
    rel = np.inf
    for it in range(1, outer_max + 1):
        xi = np.asarray(problem.nonsmooth_small(x[c]), dtype=float)
        q = q0 - S @ xi
        if np.all(q >= 0):
            lam = np.zeros(c.size)
        else:
            lam, sweeps = projected_gauss_seidel(
                S, -q, lower=np.zeros(c.size), x0=lam,
                tol=inner_tol * 1e-2, max_sweeps=inner_max,
            )
            sweeps_total += sweeps
        qp_solves += 1
        x_new = x0 + solver.W @ (lam - xi)
        np.maximum(x_new, problem.lower, out=x_new)
        change = float(np.linalg.norm(x_new - x))
        denom = float(np.linalg.norm(x_new))
        rel = change / denom if denom > 0 else change
        x = x_new
        if rel < outer_tol:
            solver._last_lam = lam
            b_eff = problem.rhs.copy()
            b_eff[c] -= xi
            res = kkt_residual(problem.A, b_eff, problem.lower, x)
            if res >= inner_tol:
                x, sweeps = projected_gauss_seidel(
                    problem.A, b_eff, lower=problem.lower, x0=x,
                    tol=inner_tol, max_sweeps=inner_max,
                )
                sweeps_total += sweeps
                res = kkt_residual(problem.A, b_eff, problem.lower, x)
            active = _active_set(solver, x, problem.lower)
            return SolveReport(x, it, sweeps_total, rel, active, res, qp_solves)
    raise NonConvergenceError(
        f"traction fixed point did not converge in {outer_max} iterations "
        f"(last relative change {rel:.3e})",
        rel_change=rel, iterations=outer_max,
    )


def _active_set(solver, x, lower):
    constrained = solver.constrained
    if not constrained.size:
        return np.zeros(0, dtype=np.int64)
    at_bound = np.abs(x[constrained] - lower[constrained]) < 1e-12 * (
        1.0 + np.abs(lower[constrained])
    )
    return constrained[at_bound]


def predicted_rate(constants: AbstractConstants) -> float:
    """Predicted linear rate of the per-step fixed-point iteration,
    (alpha_phi + alpha_c c_j^2) / m_A; warns when it is not contractive."""
    if constants.m_A <= 0:
        raise ValueError("strong monotonicity constant m_A must be positive")
    rho = (constants.alpha_phi + constants.alpha_c * constants.c_j**2) / constants.m_A
    if rho >= 1.0:
        warnings.warn(
            f"predicted fixed-point rate {rho:.3f} >= 1: the per-step "
            "iteration is not guaranteed to contract",
            stacklevel=2,
        )
    return rho
