"""Time-stepping schemes for the discrete history-dependent inequality.

Three schemes advance the solution; they differ only in how the lagged
(convexified) boundary term and the second argument of the coupling
functional are fed:

  * first_order   : previous step value (single solve per step),
  * fixed_point   : current value, realized by a per-step fixed-point
    iteration lagging the coupling argument (second order),
  * extrapolation : 2 u_{n-1} - u_{n-2} (single solve per step for n >= 2,
    fixed-point steps at n = 0, 1; second order).

The history integral always uses the modified trapezoid rule, so no value
at the current time enters any right-hand side.  Step 0 has no history
contribution and is identical for all three schemes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contact import AbstractConstants
from .history import HistoryState, TimeGrid, update_zeta
from .qp import FactorizedStepSolver, NonConvergenceError, SolveReport, StepProblem, solve_step

FIRST_ORDER = "first_order"
FIXED_POINT = "fixed_point"
EXTRAPOLATION = "extrapolation"
SCHEMES = (FIRST_ORDER, FIXED_POINT, EXTRAPOLATION)


@dataclass
class SchemeConfig:
    scheme: str = FIXED_POINT
    outer_tol: float = 1e-10
    outer_max_iter: int = 200
    inner_tol: float = None
    inner_max_iter: int = 200000
    constants: AbstractConstants = field(default_factory=AbstractConstants)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if self.inner_tol is None:
            self.inner_tol = self.outer_tol / 10.0
        if self.outer_tol <= 0 or self.inner_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.outer_max_iter < 1 or self.inner_max_iter < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass
class StepDiagnostics:
    outer_iters: int
    qp_solves: int
    pgs_sweeps: int
    active_count: int
    kkt_residual: float
    rel_change: float
    zeta: float
    iterate_errors: tuple = ()


@dataclass
class Trajectory:
    grid: TimeGrid
    states: list
    diags: list
    scheme: str

    @property
    def final_state(self):
        return self.states[-1]


def _step_base_rhs(n, states, instance, grid):
    """Load and history parts of the right-hand side; fixed within a step."""
    return instance.load(grid.t(n)) - instance.history_rhs(grid, n, states)


def _solve_inner(n, states, instance, grid, cfg, solver, w_arg, zeta_prev,
                 start, base=None) -> SolveReport:
    """One convex inequality with lagged argument w_arg."""
    if base is None:
        base = _step_base_rhs(n, states, instance, grid)
    rhs = (
        base
        - instance.phi_arg_rhs(w_arg, zeta_prev)
        + instance.alpha_c * (instance.m_jc @ w_arg)
    )
    problem = StepProblem(solver.A, rhs, instance.lower,
                          nonsmooth=getattr(instance, "nonsmooth", None),
                          solver=solver,
                          nonsmooth_small=getattr(instance, "nonsmooth_small", None),
                          nonsmooth_support=getattr(instance, "contact_dofs", None))
    return solve_step(problem, start, cfg.outer_tol, cfg.outer_max_iter,
                      cfg.inner_tol, cfg.inner_max_iter)


def prepare_solver(instance) -> FactorizedStepSolver:
    """Factorize the step operator A + alpha_c * M once per run."""
    a_tot = instance.a_base + instance.alpha_c * instance.m_jc
    return FactorizedStepSolver(a_tot.tocsr(), instance.lower)


def step_first_order(n, states, instance, grid, cfg, solver, zeta_prev=0.0):
    """Single solve with both lagged arguments at u_{n-1}; n >= 1."""
    w = states[n - 1]
    rep = _solve_inner(n, states, instance, grid, cfg, solver, w, zeta_prev, start=w)
    diag = StepDiagnostics(1, rep.qp_solves, rep.inner_sweeps_total,
                           rep.active_set.size, rep.kkt_residual,
                           rep.rel_change, zeta_prev)
    return rep.x, diag


def step_fixed_point_implicit(n, states, instance, grid, cfg, solver, zeta_prev=0.0):
    """Per-step fixed point: lag the coupling argument at the previous
    iterate and re-solve until the relative change in the problem norm
    drops below outer_tol (absolute change when the iterate is zero)."""
    w = states[n - 1] if n >= 1 else np.zeros(instance.ndof)
    base = _step_base_rhs(n, states, instance, grid)
    iterates = [w.copy()]
    qp_solves = 0
    sweeps = 0
    rel = np.inf
    rep = None
    for it in range(1, cfg.outer_max_iter + 1):
        rep = _solve_inner(n, states, instance, grid, cfg, solver, w, zeta_prev,
                           start=w, base=base)
        qp_solves += rep.qp_solves
        sweeps += rep.inner_sweeps_total
        change = instance.xnorm(rep.x - w)
        denom = instance.xnorm(rep.x)
        rel = change / denom if denom > 0 else change
        w = rep.x
        iterates.append(w.copy())
        if rel < cfg.outer_tol:
            errors = _iterate_errors(iterates, w, instance.xnorm)
            diag = StepDiagnostics(it, qp_solves, sweeps, rep.active_set.size,
                                   rep.kkt_residual, rel, zeta_prev, errors)
            return w, diag
    raise NonConvergenceError(
        f"fixed-point step did not converge in {cfg.outer_max_iter} "
        f"iterations (last relative change {rel:.3e})",
        rel_change=rel, iterations=cfg.outer_max_iter, step=n,
    )


def step_extrapolation(n, states, instance, grid, cfg, solver, zeta_prev=0.0):
    """Lagged arguments extrapolated to 2 u_{n-1} - u_{n-2} for n >= 2;
    steps 0 and 1 use the per-step fixed point."""
    if n < 2:
        return step_fixed_point_implicit(n, states, instance, grid, cfg,
                                         solver, zeta_prev)
    w = 2.0 * states[n - 1] - states[n - 2]
    rep = _solve_inner(n, states, instance, grid, cfg, solver, w, zeta_prev,
                       start=states[n - 1])
    diag = StepDiagnostics(1, rep.qp_solves, rep.inner_sweeps_total,
                           rep.active_set.size, rep.kkt_residual,
                           rep.rel_change, zeta_prev)
    return rep.x, diag


_STEPPERS = {
    FIRST_ORDER: step_first_order,
    FIXED_POINT: step_fixed_point_implicit,
    EXTRAPOLATION: step_extrapolation,
}


def run(cfg: SchemeConfig, instance, grid: TimeGrid) -> Trajectory:
    """Advance steps 0..N; deterministic for identical inputs.

    The strain-path accumulator zeta is refreshed once per accepted step,
    never inside the per-step iterations.
    """
    stepper = _STEPPERS[cfg.scheme]
    solver = getattr(instance, "_solver", None)
    if solver is None:
        solver = prepare_solver(instance)
        instance._solver = solver

    states = np.zeros((grid.N + 1, instance.ndof))
    hist = HistoryState()
    strain_norms = []
    diags = []
    for n in range(grid.N + 1):
        zeta_prev = update_zeta(hist, grid, strain_norms, n)
        try:
            if n == 0:
                x, diag = step_fixed_point_implicit(0, states, instance, grid,
                                                    cfg, solver, zeta_prev)
            else:
                x, diag = stepper(n, states, instance, grid, cfg, solver, zeta_prev)
        except NonConvergenceError as err:
            err.step = n
            raise
        states[n] = x
        hist.trajectory.append(x)
        strain_norms.append(instance.strain_norm(x))
        diags.append(diag)
    return Trajectory(grid, [states[n] for n in range(grid.N + 1)], diags, cfg.scheme)


def _iterate_errors(iterates, converged, norm):
    """Distances of the recorded iterates to the converged value; the
    trailing zero entry (the converged iterate itself) is kept."""
    return tuple(norm(it - converged) for it in iterates)


def geometric_rates(iterate_errors, floor=1e-13):
    """Geometric mean of successive error ratios, ignoring sub-floor
    tails where roundoff and inner tolerances dominate.  Returns None if
    fewer than two usable errors remain."""
    errs = [e for e in iterate_errors if e > floor]
    if len(errs) < 2:
        return None
    ratios = np.array(errs[1:]) / np.array(errs[:-1])
    return float(np.exp(np.mean(np.log(ratios))))


def fixed_point_rates(traj: Trajectory, rel_floor=1e-8):
    """Per-step geometric contraction rates of the fixed-point iteration.

    Steps that converge immediately (zero data) carry no rate and are
    skipped.  The floor discards iterate errors already at the level of
    the stopping tolerance.
    """
    rates = []
    for diag in traj.diags:
        errors = diag.iterate_errors
        if not errors:
            continue
        scale = max(errors)
        rate = geometric_rates(errors, floor=max(1e-14, rel_floor * scale))
        if rate is not None:
            rates.append(rate)
    return rates
