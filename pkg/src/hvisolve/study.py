"""Convergence-study harness: configuration, refinement studies, reports.

A study solves the contact problem on a ladder of discretizations, always
measures errors against a finer reference solve (prolongating each level
onto the reference mesh), and fits convergence orders from log ratios of
successive errors.  Modes:

  temporal   : h fixed at the reference, k from the k list
  spatial    : k fixed at the reference, h from the h list
  path_keqh  : k = h along the h list
  path_k2eqh : k^2 = h along the h list (step count rounded to the grid)
  scalar_bench : closed-form single-unknown benchmark over the k list

Reports are written as deterministic CSV (identical config gives
identical bytes) with an optional SVG log-log plot next to each CSV.
"""

from __future__ import annotations

import configparser
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .bench import bench_error_series, make_default_bench
from .contact import AbstractConstants, ContactData, make_contact_instance, standard_forcing
from .history import TimeGrid
from .mesh import build_fespace, build_rect_mesh, h1_norm, prolongate
from .qp import NonConvergenceError
from .schemes import SCHEMES, SchemeConfig, Trajectory, run

MODES = ("temporal", "spatial", "path_keqh", "path_k2eqh", "profile", "scalar_bench")


class ConfigError(ValueError):
    """Invalid or unparsable configuration."""


@dataclass
class StudySpec:
    mode: str = "temporal"
    h_list: list = field(default_factory=lambda: [1 / 8, 1 / 16, 1 / 32])
    k_list: list = field(default_factory=lambda: [1 / 4, 1 / 8, 1 / 16, 1 / 32])
    h_ref: float = 1 / 128
    k_ref: float = 1 / 128
    out: str = "study.csv"
    plot: bool = True
    l1: float = 2.0
    l2: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown study mode {self.mode!r}, expected one of {MODES}")

    def validate_reference(self):
        if self.mode == "temporal":
            if self.k_list and self.k_ref >= min(self.k_list) - 1e-15:
                raise ConfigError("reference step k_ref must be finer than every study level")
        if self.mode == "spatial" and self.h_list:
            if self.h_ref >= min(self.h_list) - 1e-15:
                raise ConfigError("reference mesh h_ref must be finer than every study level")
        if self.mode.startswith("path") and self.h_list:
            if self.h_ref >= min(self.h_list) - 1e-15:
                raise ConfigError("reference mesh h_ref must be finer than every study level")


@dataclass
class ReportRow:
    h: float
    k: float
    error: float = None
    order: float = None


@dataclass
class ConvergenceReport:
    rows: list
    metadata: dict

    def errors(self):
        return [r.error for r in self.rows]

    def orders(self):
        return [r.order for r in self.rows if r.order is not None]

    def final_order(self):
        orders = self.orders()
        return orders[-1] if orders else None


def fit_order(errors, steps):
    """Pairwise convergence orders ln(e_{i-1}/e_i) / ln(r_{i-1}/r_i).

    Rows are expected sorted by decreasing step; equal steps give order 0.
    """
    errors = list(errors)
    steps = list(steps)
    if len(errors) != len(steps):
        raise ValueError("errors and steps must have equal length")
    if len(errors) < 2:
        raise ValueError("need at least two levels to fit an order")
    if any(e is None or e <= 0 for e in errors):
        raise ValueError("errors must be positive")
    orders = []
    for i in range(1, len(errors)):
        if steps[i - 1] == steps[i]:
            orders.append(0.0)
        else:
            orders.append(np.log(errors[i - 1] / errors[i])
                          / np.log(steps[i - 1] / steps[i]))
    return orders


def loglog_slope(errors, steps):
    """Least-squares slope of log(error) against log(step)."""
    le = np.log(np.asarray(errors, dtype=float))
    ls = np.log(np.asarray(steps, dtype=float))
    return float(np.polyfit(ls, le, 1)[0])


@dataclass
class StudyCache:
    """In-process memo of assembled instances and reference solves, keyed
    by the identity of the ContactData object (its callables are not
    hashable by value)."""

    instances: dict = field(default_factory=dict)
    references: dict = field(default_factory=dict)

    def instance(self, data: ContactData, l1, l2, h):
        nx = _cells(l1, h, "L1")
        ny = _cells(l2, h, "L2")
        key = (id(data), nx, ny)
        if key not in self.instances:
            mesh = build_rect_mesh(l1, l2, nx, ny)
            space = build_fespace(mesh)
            self.instances[key] = make_contact_instance(space, data)
        return self.instances[key]

    def reference(self, data: ContactData, spec: StudySpec, cfg: SchemeConfig):
        inst = self.instance(data, spec.l1, spec.l2, spec.h_ref)
        n_ref = _steps(data.T, spec.k_ref)
        key = (id(data), cfg.scheme, inst.space.mesh.nx, inst.space.mesh.ny,
               n_ref, cfg.outer_tol)
        if key not in self.references:
            traj = run(cfg, inst, TimeGrid(data.T, n_ref))
            self.references[key] = (inst, traj)
        return self.references[key]


def _cells(length, h, name):
    n = round(length / h)
    if n < 1 or abs(n * h - length) > 1e-9 * length:
        raise ConfigError(f"mesh size {h} does not divide the side {name}={length}")
    return n


def _steps(T, k):
    n = round(T / k)
    if n < 1 or abs(n * k - T) > 1e-9 * T:
        raise ConfigError(f"time step {k} does not divide the final time T={T}")
    return n


def _study_levels(spec: StudySpec, data: ContactData):
    """(h, k) pairs of the study levels, coarsest first."""
    if spec.mode == "temporal":
        ks = sorted(spec.k_list, reverse=True)
        return [(spec.h_ref, k) for k in ks]
    if spec.mode == "spatial":
        hs = sorted(spec.h_list, reverse=True)
        return [(h, spec.k_ref) for h in hs]
    hs = sorted(spec.h_list, reverse=True)
    if spec.mode == "path_keqh":
        return [(h, h) for h in hs]
    if spec.mode == "path_k2eqh":
        levels = []
        for h in hs:
            n = max(1, round(data.T / np.sqrt(h)))
            levels.append((h, data.T / n))
        return levels
    raise ValueError(f"mode {spec.mode!r} does not define refinement levels")


def _level_summary(traj: Trajectory, instance):
    pen = max(float(np.max(instance.trace_normal(s))) for s in traj.states)
    return {
        "steps": traj.grid.N,
        "max_outer_iters": max(d.outer_iters for d in traj.diags),
        "qp_solves": sum(d.qp_solves for d in traj.diags),
        "max_kkt_residual": max(d.kkt_residual for d in traj.diags),
        "max_penetration": pen,
    }


def run_study(spec: StudySpec, data: ContactData, cfg: SchemeConfig,
              cache: StudyCache = None) -> ConvergenceReport:
    """Run all levels of a study and fit the convergence orders.

    Solver failures on individual levels are recorded and the remaining
    levels still run; failed rows carry no error or order.
    """
    t0 = time.perf_counter()
    if spec.mode == "profile":
        raise ValueError("profile output is produced by emit_profile, not run_study")
    if spec.mode == "scalar_bench":
        return _run_scalar_bench(spec, cfg, t0)
    spec.validate_reference()
    cache = cache if cache is not None else StudyCache()

    ref_instance, ref_traj = cache.reference(data, spec, cfg)
    u_ref = ref_traj.final_state
    levels = _study_levels(spec, data)
    varied = "k" if spec.mode == "temporal" else "h"

    rows = []
    level_diags = []
    failures = []
    for h, k in levels:
        instance = cache.instance(data, spec.l1, spec.l2, h)
        grid = TimeGrid(data.T, _steps(data.T, k))
        try:
            traj = run(cfg, instance, grid)
        except NonConvergenceError as err:
            failures.append({"h": h, "k": k, "error": str(err), "step": err.step})
            rows.append(ReportRow(h, k))
            continue
        if instance is ref_instance:
            diff = u_ref - traj.final_state
        else:
            diff = u_ref - prolongate(traj.final_state, instance.space,
                                      ref_instance.space)
        rows.append(ReportRow(h, k, error=h1_norm(diff, ref_instance.space)))
        level_diags.append({"h": h, "k": k, **_level_summary(traj, instance)})

    _attach_orders(rows, varied)
    metadata = {
        "mode": spec.mode,
        "scheme": cfg.scheme,
        "h_ref": spec.h_ref,
        "k_ref": spec.k_ref,
        "varied": varied,
        "wall_time": time.perf_counter() - t0,
        "levels": level_diags,
        "reference": _level_summary(ref_traj, ref_instance),
        "failures": failures,
    }
    return ConvergenceReport(rows, metadata)


def _run_scalar_bench(spec, cfg, t0):
    problem = make_default_bench()
    ks = sorted(spec.k_list, reverse=True)
    errors = bench_error_series(problem, cfg, ks)
    rows = [ReportRow(float("nan"), k, error=e) for k, e in zip(ks, errors)]
    _attach_orders(rows, "k")
    metadata = {
        "mode": "scalar_bench",
        "scheme": cfg.scheme,
        "h_ref": float("nan"),
        "k_ref": float("nan"),
        "varied": "k",
        "wall_time": time.perf_counter() - t0,
        "levels": [],
        "failures": [],
    }
    return ConvergenceReport(rows, metadata)


def _attach_orders(rows, varied):
    prev = None
    for row in rows:
        if row.error is None:
            prev = None
            continue
        step = getattr(row, varied)
        if prev is not None:
            p_step, p_err = prev
            row.order = fit_order([p_err, row.error], [p_step, step])[0]
        prev = (step, row.error)


def _fmt_step(x):
    return "-" if x != x else f"{x:.10g}"  # NaN marks a non-applicable column


def write_report_csv(report: ConvergenceReport, path):
    """Deterministic CSV: a comment header, then h,k,error,order rows.

    The emitted order column is recomputed from the rounded error column
    so that re-deriving orders from the file reproduces it.
    """
    meta = report.metadata
    lines = [
        f"# mode={meta['mode']} scheme={meta['scheme']} "
        f"h_ref={_fmt_step(meta['h_ref'])} k_ref={_fmt_step(meta['k_ref'])}",
        "h,k,error,order",
    ]
    varied = meta["varied"]
    prev = None
    for row in report.rows:
        if row.error is None:
            lines.append(f"{_fmt_step(row.h)},{_fmt_step(row.k)},-,-")
            prev = None
            continue
        err_txt = f"{row.error:.5e}"
        step = getattr(row, varied)
        if prev is None:
            order_txt = "-"
        else:
            p_step, p_err = prev
            order_txt = f"{fit_order([p_err, float(err_txt)], [p_step, step])[0]:.6f}"
        lines.append(f"{_fmt_step(row.h)},{_fmt_step(row.k)},{err_txt},{order_txt}")
        prev = (step, float(err_txt))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def write_report_svg(report: ConvergenceReport, path):
    """Log-log plot of error against the varied step size."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    varied = report.metadata["varied"]
    steps = [getattr(r, varied) for r in report.rows if r.error is not None]
    errors = [r.error for r in report.rows if r.error is not None]
    fig, ax = plt.subplots(figsize=(5, 4))
    if steps:
        ax.loglog(steps, errors, "o-", label=report.metadata["scheme"])
        ax.legend()
    ax.set_xlabel(varied)
    ax.set_ylabel("H1 error")
    ax.set_title(f"{report.metadata['mode']} study")
    ax.grid(True, which="both", alpha=0.4)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def emit_profile(traj: Trajectory, space, t: float, out):
    """CSV of the normal displacement along the contact edge at the final
    time: columns x, u_nu, node order by ascending x."""
    if abs(t - traj.grid.T) > 1e-12 * max(1.0, traj.grid.T):
        raise ValueError(f"profile time {t} is not the final time {traj.grid.T}")
    u = traj.final_state
    nodes = space.gamma3_nodes
    ydofs = space.gamma3_ydofs
    xs = space.mesh.vertices[nodes, 0]
    lines = ["x,u_nu"]
    for x, dof in zip(xs, ydofs):
        val = -u[dof] if dof >= 0 else 0.0
        lines.append(f"{x:.10g},{val:.6e}")
    with open(out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return out


# ---------------------------------------------------------------------------
# Configuration files


def _parse_size(text):
    text = text.strip()
    try:
        if "/" in text:
            return float(Fraction(text))
        return float(text)
    except (ValueError, ZeroDivisionError) as err:
        raise ConfigError(f"cannot parse size {text!r}") from err


def _parse_size_list(text):
    items = text.replace(",", " ").split()
    if not items:
        raise ConfigError("empty size list")
    return [_parse_size(item) for item in items]


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def load_config(path):
    """Parse a study configuration file.

    Sections [domain], [material], [contact], [scheme], [study]; any
    omitted key falls back to the standard benchmark defaults.  Violated
    smallness conditions on the abstract constants warn but do not fail.
    Returns (ContactData, SchemeConfig, StudySpec).
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except configparser.Error as err:
        raise ConfigError(f"config parse error in {path}: {err}") from err

    bad = []

    def get(section, key, default, conv=float):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key)
        try:
            if conv is bool:
                return _BOOL[raw.strip().lower()]
            return conv(raw)
        except (ValueError, KeyError, ConfigError):
            bad.append(f"[{section}] {key} = {raw!r}")
            return default

    l1 = get("domain", "l1", 2.0)
    l2 = get("domain", "l2", 1.0)

    relax_rate = get("contact", "relax_rate", 1.0)
    f0, f2 = standard_forcing(l2)
    data_kwargs = dict(
        E=get("material", "e", 2.0),
        kappa=get("material", "kappa", 0.3),
        mu=get("material", "mu", 0.0),
        alpha_j=get("contact", "alpha_j", 0.5),
        g=get("contact", "g", 0.15),
        S_force=get("contact", "s", 1.0),
        s1=get("contact", "s1", 0.1),
        s2=get("contact", "s2", 0.15),
        c1=get("contact", "c1", 0.1),
        c2=get("contact", "c2", -0.1),
        c3=get("contact", "c3", 0.4),
        T=get("contact", "t_final", 0.5),
        relax_kernel=lambda t: np.exp(-relax_rate * t),
        f0=f0,
        f2=f2,
    )

    constants_kwargs = dict(
        m_A=get("scheme", "m_a", 1.0),
        L_A=get("scheme", "l_a", 0.0),
        alpha_phi=get("scheme", "alpha_phi", 0.0),
        beta_phi=get("scheme", "beta_phi", 0.0),
        alpha_j_relax=get("scheme", "alpha_j_relax", 0.0),
        alpha_c=get("scheme", "alpha_c", 0.0),
        c_j=get("scheme", "c_j", 0.0),
        c0_growth=get("scheme", "c0_growth", 0.0),
        c1_growth=get("scheme", "c1_growth", 0.0),
    )
    tol = get("scheme", "tol", 1e-10)
    scheme_kwargs = dict(
        scheme=get("scheme", "scheme", "fixed_point", conv=str).strip(),
        outer_tol=tol,
        outer_max_iter=get("scheme", "max_outer", 200, conv=int),
        inner_tol=get("scheme", "inner_tol", None),
        inner_max_iter=get("scheme", "max_inner", 200000, conv=int),
    )

    study_kwargs = dict(
        mode=get("study", "mode", "temporal", conv=str).strip(),
        h_list=get("study", "h", [1 / 8, 1 / 16, 1 / 32], conv=_parse_size_list),
        k_list=get("study", "k", [1 / 4, 1 / 8, 1 / 16, 1 / 32], conv=_parse_size_list),
        h_ref=get("study", "h_ref", 1 / 128, conv=_parse_size),
        k_ref=get("study", "k_ref", 1 / 128, conv=_parse_size),
        out=get("study", "out", "study.csv", conv=str).strip(),
        plot=get("study", "plot", True, conv=bool),
        l1=l1,
        l2=l2,
    )

    if bad:
        raise ConfigError("invalid config values: " + "; ".join(bad))

    try:
        data = ContactData(**data_kwargs)
        constants = AbstractConstants(**constants_kwargs)
        cfg = SchemeConfig(constants=constants, **scheme_kwargs)
        spec = StudySpec(**study_kwargs)
    except (ValueError, ConfigError) as err:
        raise ConfigError(f"config validation failed: {err}") from err

    if not constants.smallness_wellposedness():
        warnings.warn("abstract constants violate the well-posedness "
                      "smallness condition", stacklevel=2)
    if not constants.smallness_convexified():
        warnings.warn("abstract constants violate the convexified-scheme "
                      "smallness condition", stacklevel=2)
    if cfg.scheme == "extrapolation" and not constants.smallness_extrapolation():
        warnings.warn("abstract constants violate the extrapolation-scheme "
                      "smallness condition", stacklevel=2)
    return data, cfg, spec
