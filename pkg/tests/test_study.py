import numpy as np
import pytest

from hvisolve.bench import bench_error_series, make_default_bench
from hvisolve.contact import ContactData
from hvisolve.history import TimeGrid
from hvisolve.schemes import FIXED_POINT, SchemeConfig, run
from hvisolve.study import (
    ConfigError,
    StudyCache,
    StudySpec,
    emit_profile,
    fit_order,
    load_config,
    run_study,
    write_report_csv,
    write_report_svg,
)

FAST = dict(h_list=[1 / 2, 1 / 4], k_list=[1 / 4, 1 / 8], h_ref=1 / 8, k_ref=1 / 16)


# --- order fitting -------------------------------------------------------------

def test_fit_order_paper_style_rows():
    # second-order temporal rows: k = 1/12 -> 1/16
    orders = fit_order([2.75085e-4, 1.54881e-4], [1 / 12, 1 / 16])
    assert orders[0] == pytest.approx(1.997, abs=0.01)
    # first-order temporal rows: k = 1/16 -> 1/32
    orders = fit_order([9.51587e-4, 4.49031e-4], [1 / 16, 1 / 32])
    assert orders[0] == pytest.approx(1.0835, abs=0.001)


def test_fit_order_exact_halving():
    assert fit_order([1.0, 0.5], [0.1, 0.05]) == [pytest.approx(1.0)]


def test_fit_order_equal_steps_is_zero():
    assert fit_order([1.0, 1.0], [0.1, 0.1]) == [0.0]


def test_fit_order_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_order([1.0, -1.0], [0.1, 0.05])
    with pytest.raises(ValueError):
        fit_order([1.0], [0.1])
    with pytest.raises(ValueError):
        fit_order([1.0, 0.5], [0.1])


# --- studies ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def fast_study():
    data = ContactData()
    cfg = SchemeConfig(scheme=FIXED_POINT, outer_tol=1e-9)
    cache = StudyCache()
    spec = StudySpec(mode="temporal", **FAST)
    report = run_study(spec, data, cfg, cache)
    return data, cfg, cache, spec, report


def test_temporal_study_shape(fast_study):
    _, _, _, spec, report = fast_study
    assert len(report.rows) == 2
    assert all(r.h == spec.h_ref for r in report.rows)
    ks = [r.k for r in report.rows]
    assert ks == sorted(ks, reverse=True)
    assert report.rows[0].order is None
    assert report.rows[1].order is not None
    assert all(r.error > 0 for r in report.rows)


def test_spatial_study_uses_reference_cache(fast_study):
    data, cfg, cache, _, _ = fast_study
    n_refs = len(cache.references)
    spec = StudySpec(mode="spatial", **FAST)
    report = run_study(spec, data, cfg, cache)
    assert len(cache.references) == n_refs  # same reference reused
    assert all(r.k == spec.k_ref for r in report.rows)
    assert report.rows[-1].error < report.rows[0].error


def test_identical_levels_give_order_zero(fast_study):
    data, cfg, cache, _, _ = fast_study
    spec = StudySpec(mode="temporal", h_list=FAST["h_list"],
                     k_list=[1 / 4, 1 / 4], h_ref=1 / 8, k_ref=1 / 16)
    report = run_study(spec, data, cfg, cache)
    assert report.rows[0].error == report.rows[1].error
    assert report.rows[1].order == 0.0


def test_scalar_bench_mode_delegates():
    cfg = SchemeConfig(scheme=FIXED_POINT)
    spec = StudySpec(mode="scalar_bench", k_list=[1 / 4, 1 / 8])
    report = run_study(spec, ContactData(), cfg)
    expect = bench_error_series(make_default_bench(), cfg, [1 / 4, 1 / 8])
    assert report.errors() == pytest.approx(expect, rel=1e-12)


def test_reference_must_be_finer():
    spec = StudySpec(mode="temporal", h_list=[1 / 4], k_list=[1 / 4, 1 / 16],
                     h_ref=1 / 8, k_ref=1 / 8)
    with pytest.raises(ConfigError):
        run_study(spec, ContactData(), SchemeConfig())


def test_csv_deterministic_and_self_consistent(fast_study, tmp_path):
    _, _, _, _, report = fast_study
    p1 = tmp_path / "a.csv"
    p2 = tmp_path / "b.csv"
    write_report_csv(report, p1)
    write_report_csv(report, p2)
    assert p1.read_bytes() == p2.read_bytes()

    lines = p1.read_text().strip().splitlines()
    assert lines[1] == "h,k,error,order"
    rows = [ln.split(",") for ln in lines[2:]]
    errs = [float(r[2]) for r in rows]
    ks = [float(r[1]) for r in rows]
    for i in range(1, len(rows)):
        recomputed = fit_order([errs[i - 1], errs[i]], [ks[i - 1], ks[i]])[0]
        assert abs(recomputed - float(rows[i][3])) < 1e-6


def test_svg_written(fast_study, tmp_path):
    _, _, _, _, report = fast_study
    out = tmp_path / "plot.svg"
    write_report_svg(report, out)
    assert out.read_text().lstrip().startswith("<?xml")


def test_failures_reported_without_aborting(fast_study, monkeypatch):
    data, cfg, cache, _, _ = fast_study
    import hvisolve.study as study_mod
    from hvisolve.qp import NonConvergenceError

    real_run = study_mod.run

    def failing_run(cfg_, inst, grid):
        if grid.N == 2:  # the k = 1/4 level only
            raise NonConvergenceError("synthetic failure", iterations=0)
        return real_run(cfg_, inst, grid)

    monkeypatch.setattr(study_mod, "run", failing_run)
    spec = StudySpec(mode="temporal", **FAST)
    report = run_study(spec, data, cfg, cache)  # reference comes from the cache
    assert report.rows[0].error is None and report.rows[0].order is None
    assert report.rows[1].error is not None
    assert report.metadata["failures"]


def test_profile_roundtrip(tmp_path):
    inst_cache = StudyCache()
    data = ContactData()
    inst = inst_cache.instance(data, 2.0, 1.0, 1 / 4)
    grid = TimeGrid(data.T, 4)
    traj = run(SchemeConfig(scheme=FIXED_POINT), inst, grid)
    out = tmp_path / "profile.csv"
    emit_profile(traj, inst.space, grid.T, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "x,u_nu"
    xs = [float(ln.split(",")[0]) for ln in lines[1:]]
    vals = [float(ln.split(",")[1]) for ln in lines[1:]]
    assert xs == sorted(xs)
    assert len(xs) == len(inst.space.gamma3_nodes)
    assert max(vals) <= data.g + 1e-8
    # deterministic bytes
    out2 = tmp_path / "profile2.csv"
    emit_profile(traj, inst.space, grid.T, out2)
    assert out.read_bytes() == out2.read_bytes()


def test_profile_zero_forcing(tmp_path):
    data = ContactData(f0=lambda t: (0.0, 0.0), f2=lambda t, p: (0.0, 0.0))
    cache = StudyCache()
    inst = cache.instance(data, 2.0, 1.0, 1 / 4)
    grid = TimeGrid(data.T, 2)
    traj = run(SchemeConfig(scheme=FIXED_POINT), inst, grid)
    out = tmp_path / "zero.csv"
    emit_profile(traj, inst.space, grid.T, out)
    vals = [float(ln.split(",")[1]) for ln in out.read_text().strip().splitlines()[1:]]
    assert all(v == 0.0 for v in vals)


def test_profile_wrong_time_rejected(tmp_path):
    data = ContactData()
    cache = StudyCache()
    inst = cache.instance(data, 2.0, 1.0, 1 / 4)
    grid = TimeGrid(data.T, 2)
    traj = run(SchemeConfig(scheme=FIXED_POINT), inst, grid)
    with pytest.raises(ValueError):
        emit_profile(traj, inst.space, 0.25, tmp_path / "x.csv")


# --- configuration ---------------------------------------------------------------

def test_load_config_defaults(tmp_path):
    path = tmp_path / "empty.ini"
    path.write_text("[domain]\n")
    data, cfg, spec = load_config(path)
    assert data.E == 2.0 and data.kappa == 0.3 and data.g == 0.15
    assert cfg.outer_tol == 1e-10
    assert cfg.scheme == "fixed_point"
    assert spec.mode == "temporal"
    assert spec.l1 == 2.0 and spec.l2 == 1.0


def test_load_config_values_and_fractions(tmp_path):
    path = tmp_path / "cfg.ini"
    path.write_text(
        "[material]\ne = 4.0\n"
        "[scheme]\nscheme = extrapolation\ntol = 1e-8\n"
        "[study]\nmode = spatial\nh = 1/4 1/8\nh_ref = 1/16\nk_ref = 1/16\n"
    )
    data, cfg, spec = load_config(path)
    assert data.E == 4.0
    assert cfg.scheme == "extrapolation"
    assert cfg.outer_tol == 1e-8
    assert spec.mode == "spatial"
    assert spec.h_list == [0.25, 0.125]
    assert spec.h_ref == 0.0625


def test_load_config_invalid_poisson(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[material]\nkappa = 0.7\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_load_config_unparsable_value(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[material]\ne = banana\n")
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert "e" in str(err.value)


def test_load_config_parse_error_has_line_info(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[material\ne = 2\n")
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert "line" in str(err.value).lower()


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_load_config_smallness_warning(tmp_path):
    path = tmp_path / "warn.ini"
    path.write_text("[scheme]\nalpha_phi = 2.0\nc_j = 1.0\nalpha_c = 1.0\n")
    with pytest.warns(UserWarning):
        load_config(path)
