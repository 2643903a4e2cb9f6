import io
import re
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from switchopt.benchmarks import BenchmarkDefinition, quadratic_terminal_cost, quadratic_tracking_cost
from switchopt.cli import SETTINGS, cmd_grad_check, component_error, main
from switchopt.problem import NormalizedGrid, SubsystemModel, SwitchedProblem
from switchopt.reporting import (
    ConfigError,
    SolveReportFile,
    parse_key_values,
    read_trajectory_csv,
    write_trajectory_csv,
)
from switchopt.rollout import SlqPolicy, rollout


def defaults(**kw):
    s = {k: d for k, (_, d) in SETTINGS.items()}
    s.update(kw)
    return s


# --- files ------------------------------------------------------------------------


def test_trajectory_csv_round_trip(tmp_path, linear_problem):
    g = NormalizedGrid.for_problem(linear_problem, 20)
    traj = rollout(linear_problem, [0.7, 2.1], SlqPolicy.open_loop([0.3], 2, g), g)
    path = tmp_path / "trajectory.csv"
    write_trajectory_csv(path, traj, g)
    header, data = read_trajectory_csv(path)
    assert header == ["z", "t", "x1", "x2", "u1"]
    assert data.shape == (g.z_nodes.size, 5)
    np.testing.assert_allclose(data[:, 0], g.z_nodes, atol=1e-12)
    np.testing.assert_allclose(data[:, 2:4], traj.x, atol=1e-12)
    np.testing.assert_allclose(data[:, 4:], traj.u_nodes(g), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5.0, 5.0), st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2))
def test_csv_values_survive_exactly(u, x0):
    # 17 significant digits reproduce every double
    sub = SubsystemModel(lambda x, v: np.array([x[1], -x[0]]) + v[0], lambda x, v: 0.0)
    p = SwitchedProblem([sub] * 2, quadratic_terminal_cost(np.zeros(2)), 0.0, 1.0, np.array(x0), 1)
    g = NormalizedGrid.for_problem(p, 3)
    traj = rollout(p, [0.4], SlqPolicy.open_loop([u], 2, g), g)
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "t.csv"
        write_trajectory_csv(path, traj, g)
        _, data = read_trajectory_csv(path)
    assert np.array_equal(data[:, 1], traj.t) and np.array_equal(data[:, 2:4], traj.x)
    assert np.all(data[:, 4] == u)


def test_solve_report_round_trip(tmp_path):
    rep = SolveReportFile("ex1", 5.440974123, (0.2245, 1.0201), 11, 12, 69, True, "gap", (1e-4, -3e-5), 6123.4567,
                          {"variant": "pairwise", "l_min": "0.001"})
    path = tmp_path / "report.txt"
    rep.write(path)
    back = SolveReportFile.read(path)
    assert back == SolveReportFile("ex1", 5.440974123, (0.2245, 1.0201), 11, 12, 69, True, "gap", (1e-4, -3e-5),
                                   6123.457, {"variant": "pairwise", "l_min": "0.001"})


def test_key_value_parsing():
    text = "# header\n\nnodes_per_mode = 50  # comment\nvariant=classic\n"
    assert parse_key_values(text) == {"nodes_per_mode": "50", "variant": "classic"}
    with pytest.raises(ConfigError, match="line 2"):
        parse_key_values("a = 1\nbroken\n")


def test_component_error_floor():
    assert component_error(1.01, 1.0) == pytest.approx(0.01)
    # near-zero references use an absolute floor of 1e-2
    assert component_error(1e-4, 0.0) == pytest.approx(1e-2)


# --- commands -----------------------------------------------------------------------


def test_list_benchmarks(capsys):
    assert main(["list-benchmarks"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("ex1:") and "\nex2:" in out


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--benchmark", "ex9"],
        ["solve"],
        ["solve", "--benchmark", "ex1", "--nodes-per-mode", "0"],
        ["solve", "--benchmark", "ex1", "--initial-times", "2,1"],
        ["grad-check", "--benchmark", "ex1", "--bogus"],
        ["frobnicate"],
    ],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == 1


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("benchmark = ex1\nnodes_per_mode = 0\n")
    assert main(["solve", "--config", str(cfg)]) == 1
    cfg.write_text("benchmark = ex1\ncolour = blue\n")
    assert main(["solve", "--config", str(cfg)]) == 1
    assert "colour" in capsys.readouterr().err


def test_solve_ex1(tmp_path, capsys):
    assert main(["solve", "--benchmark", "ex1", "--output-dir", str(tmp_path)]) == 0
    rep = SolveReportFile.read(tmp_path / "report.txt")
    assert rep.converged and rep.cost == pytest.approx(5.4438, rel=0.01)
    assert rep.settings["nodes_per_mode"] == "200"
    header, data = read_trajectory_csv(tmp_path / "trajectory.csv")
    assert data.shape == (601, 5) and data[-1, 1] == 3.0


def test_report_is_stable_across_runs(tmp_path, capsys):
    texts = []
    for k in range(2):
        d = tmp_path / str(k)
        d.mkdir()
        assert main(["solve", "--benchmark", "ex1", "--nodes-per-mode", "40", "--output-dir", str(d)]) == 0
        texts.append(re.sub(r"wall_time_ms = .*", "", (d / "report.txt").read_text()))
        texts.append((d / "trajectory.csv").read_text())
    assert texts[0] == texts[2] and texts[1] == texts[3]


def test_solve_without_outer_budget_is_unconverged(tmp_path, capsys):
    argv = ["solve", "--benchmark", "ex1", "--nodes-per-mode", "40", "--max-outer", "0", "--output-dir", str(tmp_path)]
    assert main(argv) == 2
    assert not SolveReportFile.read(tmp_path / "report.txt").converged


def test_grad_check_ex1(capsys):
    assert main(["grad-check", "--benchmark", "ex1", "--nodes-per-mode", "100"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3 and lines[1].endswith("yes") and lines[2].endswith("yes")
    assert main(["grad-check", "--benchmark", "ex1", "--nodes-per-mode", "100", "--tol", "1e-12"]) == 2


def test_grad_check_single_mode_prints_empty_table():
    cost, quad = quadratic_tracking_cost(np.zeros(1), 1)
    sub = SubsystemModel(lambda x, u: -x + u, cost, lambda x, u: -np.eye(1), lambda x, u: np.eye(1), quad)
    p = SwitchedProblem([sub], quadratic_terminal_cost(np.zeros(1)), 0.0, 1.0, np.ones(1), 1)
    defn = BenchmarkDefinition("one", p, np.zeros(0))
    out = io.StringIO()
    assert cmd_grad_check(defaults(benchmark="one", nodes_per_mode=20), out, defn) == 0
    assert len(out.getvalue().strip().splitlines()) == 1


def test_scaling_single_size(capsys):
    assert main(["scaling", "--benchmark", "ex1", "--nodes-per-mode", "30"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and lines[1].split()[0] == "30" and lines[1].split()[-1] == "-"
