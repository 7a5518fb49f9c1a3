import json
import math

import numpy as np
import pytest

from lqp import SolveStatus, build
from lqp.cli import (
    HISTORY_HEADER,
    RateDiagnostic,
    RunReport,
    batch,
    format_profile,
    format_report,
    list_problems,
    main,
    parse_profile,
    parse_report,
    rate_diagnostic,
    read_history,
    read_reports_csv,
    run,
    write_history,
    write_report,
)
from lqp.solver import EvalCounts, IterateRecord, SolveResult


def _record(k, x=None, **kw):
    defaults = dict(
        k=k, x=x, f=0.0, feas_norm=0.0, penalty=0.0, beta=1.0,
        delta_x_norm=0.0, kkt_stationarity=0.0, backtrack_count=0,
        cumulative_time=0.0,
    )
    defaults.update(kw)
    return IterateRecord(**defaults)


def _result_with_history(history):
    return SolveResult(
        status=SolveStatus.CONVERGED_OBJ_FEAS,
        x_final=history[-1].x if history[-1].x is not None else np.zeros(1),
        multiplier=np.zeros(1),
        history=tuple(history),
        evals=EvalCounts(),
    )


# --- file formats ---


def test_report_round_trip(tmp_path):
    report = RunReport(
        problem="optctrl3", n=4502, m=3000, solver="lqp",
        iters=5, cpu_seconds=0.11, f_final=2047.99, feas_final=1.43e-06,
        status="ConvergedObjFeas", rho_used=1e7,
    )
    path = tmp_path / "r.txt"
    write_report(path, report)
    parsed = parse_report(path)
    assert parsed["problem"] == "optctrl3"
    assert int(parsed["iters"]) == 5
    assert float(parsed["cpu_seconds"]) == 0.11
    assert float(parsed["f_final"]) == 2047.99
    assert float(parsed["feas_final"]) == 1.43e-06
    assert parsed["status"] == "ConvergedObjFeas"
    assert float(parsed["rho_used"]) == 1e7


def test_report_includes_rate_lines_when_given(tmp_path):
    report = RunReport("p", 2, 1, "lqp", 12, 0.1, -2.0, 1e-9,
                       "ConvergedKkt", 1e6)
    rate = RateDiagnostic("linear", -0.693, 0.999)
    path = tmp_path / "r.txt"
    write_report(path, report, rate)
    parsed = parse_report(path)
    assert parsed["rate_model"] == "linear"
    assert float(parsed["rate_fit_parameter"]) == -0.693
    assert float(parsed["rate_r_squared"]) == 0.999


def test_history_round_trip_is_exact(tmp_path):
    problem = build("sphere-linear")
    from lqp import SolverConfig, solve
    result = solve(problem, problem.x0, SolverConfig(rho=1e6))
    path = tmp_path / "h.csv"
    write_history(path, result.history)

    with open(path) as fh:
        assert fh.readline().strip() == ",".join(HISTORY_HEADER)

    rows = read_history(path)
    assert len(rows) == len(result.history)
    for row, rec in zip(rows, result.history):
        assert row["k"] == rec.k
        assert row["f"] == rec.f
        assert row["feas_norm"] == rec.feas_norm
        assert row["penalty"] == rec.penalty
        assert row["beta"] == rec.beta
        assert row["delta_x_norm"] == rec.delta_x_norm
        assert row["kkt_stationarity"] == rec.kkt_stationarity
        assert row["backtracks"] == rec.backtrack_count
        assert row["time"] == rec.cumulative_time


def test_read_history_rejects_wrong_header(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("k,f,feas\n0,1.0,2.0\n")
    with pytest.raises(ValueError):
        read_history(path)


def test_reports_csv_round_trip(tmp_path):
    reports = [
        RunReport("a", 2, 1, "lqp", 10, 0.25, -2.0, 1e-9, "ConvergedObjFeas", 1e6),
        RunReport("b", 3, 2, "gd", 0, math.nan, math.nan, math.nan,
                  "DivergenceError", 1e6),
    ]
    from lqp.cli import _write_reports_csv
    path = tmp_path / "reports.csv"
    _write_reports_csv(path, reports)
    back = read_reports_csv(path)
    assert back[0] == reports[0]
    assert back[1].status == "DivergenceError"
    assert math.isnan(back[1].f_final)


# --- rate diagnostics ---


def test_rate_diagnostic_detects_linear_decay():
    problem = build("sphere-linear")
    ref = problem.reference_solution.x
    v = np.array([0.6, -0.8])
    history = [_record(k, x=ref + 0.5 ** k * v) for k in range(16)]
    rate = rate_diagnostic(_result_with_history(history), problem)
    assert rate is not None
    assert rate.model == "linear"
    assert rate.fit_parameter == pytest.approx(math.log(0.5), rel=1e-9)
    assert rate.r_squared > 0.999


def test_rate_diagnostic_sublinear_decay():
    problem = build("sphere-linear")
    ref = problem.reference_solution.x
    v = np.array([1.0, 0.0])
    history = [_record(0, x=ref + v)]
    # Error 1/k decays as exp(-log k): ideal for the log-k fit, poor for
    # the linear one.
    history += [_record(k, x=ref + v / k) for k in range(1, 16)]
    rate = rate_diagnostic(_result_with_history(history), problem)
    assert rate.model == "sublinear"
    assert rate.fit_parameter == pytest.approx(-1.0, rel=1e-9)


def test_rate_diagnostic_inconclusive_on_noise():
    problem = build("sphere-linear")
    ref = problem.reference_solution.x
    rng = np.random.default_rng(0)
    history = [_record(k, x=ref + np.exp(rng.uniform(-1, 1)) * np.array([1.0, 0.0]))
               for k in range(16)]
    rate = rate_diagnostic(_result_with_history(history), problem)
    assert rate.model == "inconclusive"
    assert rate.fit_parameter == 0.0
    assert rate.r_squared < 0.8


def test_rate_diagnostic_needs_reference_and_length():
    no_ref = build("dtoc-chain")
    history = [_record(k, x=np.zeros(no_ref.n)) for k in range(16)]
    assert rate_diagnostic(_result_with_history(history), no_ref) is None

    problem = build("sphere-linear")
    ref = problem.reference_solution.x
    short = [_record(k, x=ref + 0.5 ** k * np.ones(2)) for k in range(5)]
    assert rate_diagnostic(_result_with_history(short), problem) is None

    unstored = [_record(k, x=None) for k in range(16)]
    assert rate_diagnostic(_result_with_history(unstored), problem) is None


# --- single runs ---


def test_run_writes_artifacts(tmp_path):
    report = run("sphere-linear", "lqp", out_dir=tmp_path)
    assert (tmp_path / "sphere-linear__lqp.history.csv").exists()
    assert (tmp_path / "sphere-linear__lqp.report.txt").exists()
    parsed = parse_report(tmp_path / "sphere-linear__lqp.report.txt")
    assert parsed["problem"] == "sphere-linear"
    assert parsed["solver"] == "lqp"
    assert parsed["status"] == report.status
    assert int(parsed["iters"]) == report.iters


def test_run_without_out_dir_writes_nothing(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    run("sphere-linear", "lqp")
    assert list(tmp_path.iterdir()) == []


def test_list_problems_rows():
    rows = list_problems()
    assert len(rows) == 6
    assert all(len(row) == 4 for row in rows)


# --- batch sweeps and profiles ---


def test_batch_writes_reports_and_profile(tmp_path):
    reports = batch(["sphere-linear", "nls-null"], ["lqp", "gauss-newton"],
                    out_dir=tmp_path)
    assert len(reports) == 4

    table = read_reports_csv(tmp_path / "reports.csv")
    assert len(table) == 4
    by_key = {(r.problem, r.solver): r for r in table}
    # The plain solver handles both problems; the least-squares baseline
    # rejects the one with a real objective and keeps going.
    assert by_key[("sphere-linear", "lqp")].status in ("ConvergedObjFeas", "ConvergedKkt")
    assert by_key[("nls-null", "gauss-newton")].status == "ConvergedObjFeas"
    assert by_key[("sphere-linear", "gauss-newton")].status == "ConfigError"
    assert math.isnan(by_key[("sphere-linear", "gauss-newton")].f_final)

    rows = parse_profile(tmp_path / "profile.txt")
    assert len(rows) == 8
    for row in rows:
        assert row["metric"] in ("cpu_seconds", "iters")
        if row["ratio"] != "unsolved":
            assert float(row["ratio"]) >= 1.0
    # Each (metric, problem) group with any usable run has a best row whose
    # ratio is written exactly as 1.0.
    for metric in ("cpu_seconds", "iters"):
        for pname in ("sphere-linear", "nls-null"):
            group = [r for r in rows
                     if r["metric"] == metric and r["problem"] == pname]
            assert any(r["ratio"] == "1.0" for r in group), (metric, pname)


def test_batch_failed_pair_keeps_others_intact(tmp_path):
    reports = batch(["sphere-linear"], ["gauss-newton", "lqp"], out_dir=tmp_path)
    statuses = {r.solver: r.status for r in reports}
    assert statuses["gauss-newton"] == "ConfigError"
    assert statuses["lqp"] in ("ConvergedObjFeas", "ConvergedKkt")
    rows = parse_profile(tmp_path / "profile.txt")
    for row in rows:
        if row["solver"] == "gauss-newton":
            assert row["ratio"] == "unsolved"
            assert row["solved"] == "no"
            assert row["obj_within_1pct"] == "na"
        else:
            assert row["ratio"] == "1.0"


def test_batch_rejects_unknown_problem_upfront(tmp_path):
    from lqp import UnknownProblemError
    with pytest.raises(UnknownProblemError):
        batch(["sphere-linear", "no-such"], ["lqp"], out_dir=tmp_path)
    assert not (tmp_path / "reports.csv").exists()


def test_batch_deterministic_apart_from_timing(tmp_path):
    a = batch(["sphere-linear", "nls-null"], ["lqp"], out_dir=tmp_path / "a")
    b = batch(["sphere-linear", "nls-null"], ["lqp"], out_dir=tmp_path / "b")
    for ra, rb in zip(a, b):
        assert (ra.problem, ra.solver, ra.iters, ra.status) == \
               (rb.problem, rb.solver, rb.iters, rb.status)
        assert ra.f_final == rb.f_final
        assert ra.feas_final == rb.feas_final


# --- command-line entry ---


def test_main_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    lines = [l for l in out.splitlines() if l.strip()]
    assert len(lines) == 7  # header plus six problems
    assert lines[0].split()[:3] == ["name", "n", "m"]


def test_main_run_ok(tmp_path, capsys):
    code = main(["run", "sphere-linear", "lqp", "--rho", "1e6",
                 "--out-dir", str(tmp_path)])
    assert code == 0
    parsed = dict(
        line.split(": ", 1) for line in capsys.readouterr().out.splitlines()
    )
    assert parsed["problem"] == "sphere-linear"
    assert float(parsed["rho_used"]) == 1e6
    assert (tmp_path / "sphere-linear__lqp.report.txt").exists()


def test_main_unknown_problem_exit_code(tmp_path, capsys):
    code = main(["run", "no-such", "lqp", "--out-dir", str(tmp_path)])
    assert code == 3
    assert "no-such" in capsys.readouterr().err


def test_main_unknown_solver_exit_code(tmp_path, capsys):
    code = main(["run", "sphere-linear", "simplex", "--out-dir", str(tmp_path)])
    assert code == 1


def test_main_bad_flag_exit_code(capsys):
    assert main(["run", "sphere-linear", "lqp", "--no-such-flag"]) == 1


def test_main_solver_failure_exit_code(tmp_path, capsys):
    code = main(["run", "sphere-linear", "gd", "--rho", "1e6",
                 "--step-size", "1e-6", "--max-iters", "20000",
                 "--out-dir", str(tmp_path)])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_main_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"rho": 123.0, "eps_feas": 1e-4}))
    code = main(["run", "sphere-linear", "lqp", "--config", str(cfg),
                 "--rho", "456", "--out-dir", str(tmp_path)])
    assert code == 0
    parsed = dict(
        line.split(": ", 1) for line in capsys.readouterr().out.splitlines()
    )
    assert float(parsed["rho_used"]) == 456.0


def test_main_unknown_config_key_exit_code(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"rho": 1.0, "typo_key": 2.0}))
    code = main(["run", "sphere-linear", "lqp", "--config", str(cfg),
                 "--out-dir", str(tmp_path)])
    assert code == 1
    assert "typo_key" in capsys.readouterr().err


def test_main_batch_prints_summary(tmp_path, capsys):
    code = main(["batch", "--problems", "sphere-linear,nls-null",
                 "--solvers", "lqp", "--rho", "1e6",
                 "--out-dir", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 2
    assert out[0].startswith("sphere-linear lqp")
    assert (tmp_path / "profile.txt").exists()


def test_format_profile_best_row_is_exactly_one():
    reports = [
        RunReport("p", 2, 1, "a", 10, 0.5, 1.0, 1e-9, "ConvergedObjFeas", 1.0),
        RunReport("p", 2, 1, "b", 20, 1.5, 1.0, 1e-9, "ConvergedObjFeas", 1.0),
    ]
    rows = parse_profile_text(format_profile(reports))
    iters_rows = {r["solver"]: r for r in rows if r["metric"] == "iters"}
    assert iters_rows["a"]["ratio"] == "1.0"
    assert float(iters_rows["b"]["ratio"]) == 2.0
    assert all(r["obj_within_1pct"] == "yes" for r in rows)


def parse_profile_text(text):
    return [dict(tok.split("=", 1) for tok in line.split())
            for line in text.splitlines() if line.strip()]
