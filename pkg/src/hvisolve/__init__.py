"""Solvers and convergence studies for history-dependent
variational-hemivariational inequalities with unilateral contact."""

from .bench import ScalarProblem, bench_error_series, make_default_bench, measure_fp_rate, run_bench
from .contact import (
    AbstractConstants,
    AssembledSystem,
    ContactData,
    assemble_gamma3_mass,
    assemble_load,
    assemble_stiffness,
    assemble_system,
    assemble_viscosity,
    default_contact_data,
    elasticity_apply,
    make_contact_instance,
    mu_j_eval,
    nonsmooth_traction,
)
from .history import (
    HistoryOperatorSpec,
    HistoryState,
    TimeGrid,
    s_extrapolated,
    s_left_rectangle,
    s_modified_trapezoid,
    update_zeta,
)
from .mesh import FESpace, Mesh, build_fespace, build_rect_mesh, h1_norm, prolongate
from .qp import (
    NonConvergenceError,
    SolveReport,
    StepProblem,
    predicted_rate,
    projected_gauss_seidel,
    solve_step,
)
from .schemes import (
    EXTRAPOLATION,
    FIRST_ORDER,
    FIXED_POINT,
    SCHEMES,
    SchemeConfig,
    Trajectory,
    fixed_point_rates,
    run,
    step_extrapolation,
    step_first_order,
    step_fixed_point_implicit,
)
from .study import (
    ConfigError,
    ConvergenceReport,
    StudyCache,
    StudySpec,
    emit_profile,
    fit_order,
    load_config,
    run_study,
    write_report_csv,
    write_report_svg,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
