"""Command-line driver.

Subcommands: solve (single run with a step-by-step summary), study
(convergence study, CSV plus optional SVG), bench (scalar closed-form
benchmark), profile (normal displacement along the contact edge at the
final time).  Command-line flags override config-file keys, which
override the built-in benchmark defaults.

Exit codes: 0 success, 2 config error, 3 solver non-convergence, 4 I/O.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .bench import bench_error_series, make_default_bench
from .contact import ContactData, default_contact_data
from .history import TimeGrid
from .qp import NonConvergenceError
from .schemes import SCHEMES, SchemeConfig, run
from .study import (
    MODES,
    ConfigError,
    StudyCache,
    StudySpec,
    emit_profile,
    fit_order,
    load_config,
    run_study,
    write_report_csv,
    write_report_svg,
    _parse_size,
    _parse_size_list,
    _steps,
)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="hvisolve",
        description="History-dependent variational-hemivariational inequality "
                    "solver and convergence-study harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="configuration file (INI sections "
                       "[domain] [material] [contact] [scheme] [study])")
        p.add_argument("--scheme", choices=SCHEMES)
        p.add_argument("--tol", type=float, help="fixed-point relative tolerance")

    p_solve = sub.add_parser("solve", help="single solve with a run summary")
    common(p_solve)
    p_solve.add_argument("--h", help="mesh size, e.g. 1/16")
    p_solve.add_argument("--k", help="time step, e.g. 1/16")

    p_study = sub.add_parser("study", help="convergence study, writes CSV")
    common(p_study)
    p_study.add_argument("--mode", choices=[m.replace("_", "-") for m in MODES])
    p_study.add_argument("--h", help="space-separated mesh sizes")
    p_study.add_argument("--k", help="space-separated time steps")
    p_study.add_argument("--h-ref", help="reference mesh size")
    p_study.add_argument("--k-ref", help="reference time step")
    p_study.add_argument("--out", help="output CSV path")
    p_study.add_argument("--no-plot", action="store_true",
                         help="skip the SVG plot next to the CSV")

    p_bench = sub.add_parser("bench", help="scalar closed-form benchmark")
    common(p_bench)
    p_bench.add_argument("--k", help="space-separated time steps")
    p_bench.add_argument("--out", help="optional CSV path")

    p_prof = sub.add_parser("profile", help="contact-edge displacement profile")
    common(p_prof)
    p_prof.add_argument("--h", help="mesh size")
    p_prof.add_argument("--k", help="time step")
    p_prof.add_argument("--t-final", type=float, help="final time override")
    p_prof.add_argument("--out", default="profile.csv", help="output CSV path")
    return parser


def _load(args):
    if args.config:
        data, cfg, spec = load_config(args.config)
    else:
        data, cfg, spec = default_contact_data(), SchemeConfig(), StudySpec()
    if args.scheme:
        cfg.scheme = args.scheme
    if args.tol is not None:
        cfg.outer_tol = args.tol
        cfg.inner_tol = args.tol / 10.0
    return data, cfg, spec


def _cmd_solve(args):
    data, cfg, spec = _load(args)
    cache = StudyCache()
    h = _parse_size(args.h) if args.h else spec.h_ref
    k = _parse_size(args.k) if args.k else spec.k_ref
    instance = cache.instance(data, spec.l1, spec.l2, h)
    grid = TimeGrid(data.T, _steps(data.T, k))
    traj = run(cfg, instance, grid)
    pen = max(float(np.max(instance.trace_normal(s))) for s in traj.states)
    outer = max(d.outer_iters for d in traj.diags)
    print(f"scheme={cfg.scheme} h={h:.10g} k={k:.10g} steps={grid.N}")
    print(f"max normal displacement on the contact edge: {pen:.6e} (bound g={data.g})")
    print(f"max fixed-point iterations per step: {outer}")
    print(f"final-state norm: {instance.xnorm(traj.final_state):.6e}")
    return 0


def _cmd_study(args):
    data, cfg, spec = _load(args)
    if args.mode:
        spec.mode = args.mode.replace("-", "_")
    if args.h:
        spec.h_list = _parse_size_list(args.h)
    if args.k:
        spec.k_list = _parse_size_list(args.k)
    if args.h_ref:
        spec.h_ref = _parse_size(args.h_ref)
    if args.k_ref:
        spec.k_ref = _parse_size(args.k_ref)
    if args.out:
        spec.out = args.out
    if args.no_plot:
        spec.plot = False

    report = run_study(spec, data, cfg)
    write_report_csv(report, spec.out)
    if spec.plot:
        write_report_svg(report, _svg_path(spec.out))
    for row in report.rows:
        err = "failed" if row.error is None else f"{row.error:.5e}"
        order = "-" if row.order is None else f"{row.order:.4f}"
        print(f"h={row.h:.10g} k={row.k:.10g} error={err} order={order}")
    if report.metadata["failures"]:
        print(f"{len(report.metadata['failures'])} level(s) failed to converge",
              file=sys.stderr)
        return 3
    print(f"report written to {spec.out}")
    return 0


def _svg_path(csv_path):
    base = csv_path[:-4] if csv_path.endswith(".csv") else csv_path
    return base + ".svg"


def _cmd_bench(args):
    _, cfg, spec = _load(args)
    ks = _parse_size_list(args.k) if args.k else sorted(spec.k_list, reverse=True)
    ks = sorted(ks, reverse=True)
    problem = make_default_bench()
    errors = bench_error_series(problem, cfg, ks)
    orders = fit_order(errors, ks)
    print(f"scalar bench, scheme={cfg.scheme}")
    for i, (k, e) in enumerate(zip(ks, errors)):
        order = "-" if i == 0 else f"{orders[i - 1]:.4f}"
        print(f"k={k:.10g} max-error={e:.5e} order={order}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("k,error,order\n")
            for i, (k, e) in enumerate(zip(ks, errors)):
                order = "-" if i == 0 else f"{orders[i - 1]:.6f}"
                fh.write(f"{k:.10g},{e:.5e},{order}\n")
        print(f"report written to {args.out}")
    return 0


def _cmd_profile(args):
    data, cfg, spec = _load(args)
    if args.t_final is not None:
        data = ContactData(**{**data.__dict__, "T": args.t_final})
    cache = StudyCache()
    h = _parse_size(args.h) if args.h else spec.h_ref
    k = _parse_size(args.k) if args.k else spec.k_ref
    instance = cache.instance(data, spec.l1, spec.l2, h)
    grid = TimeGrid(data.T, _steps(data.T, k))
    traj = run(cfg, instance, grid)
    emit_profile(traj, instance.space, grid.T, args.out)
    pen = float(np.max(instance.trace_normal(traj.final_state)))
    print(f"profile written to {args.out} "
          f"(max u_nu = {pen:.6e}, bound g = {data.g})")
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "study": _cmd_study,
    "bench": _cmd_bench,
    "profile": _cmd_profile,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except NonConvergenceError as err:
        step = f" at step {err.step}" if err.step is not None else ""
        print(f"solver failed to converge{step}: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
