import numpy as np
import pytest

from switchopt.benchmarks import builtin
from switchopt.outer import OuterSettings, ocs2_solve
from switchopt.problem import NormalizedGrid, SubsystemModel, SwitchedProblem, TerminalCost

# criterion -> (passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def quadratic_subsystem(A, B, x_goal, name=""):
    """Linear mode ``A x + B u`` with cost ``0.5 (|x - x_goal|^2 + |u|^2)``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    xg = np.asarray(x_goal, dtype=float)
    nx, nu = B.shape

    def cost(x, u):
        e = x - xg
        return 0.5 * (float(e @ e) + float(u @ u))

    def quad(x, u):
        return cost(x, u), x - xg, np.array(u, dtype=float), np.eye(nx), np.zeros((nx, nu)), np.eye(nu)

    return SubsystemModel(
        lambda x, u: A @ x + B @ u, cost, lambda x, u: A, lambda x, u: B, quad, name=name
    )


def quadratic_terminal(nx, weight=0.5):
    return TerminalCost(
        lambda x: weight * float(x @ x), lambda x: 2.0 * weight * x, lambda x: 2.0 * weight * np.eye(nx)
    )


@pytest.fixture
def linear_problem():
    """Three linear modes with quadratic tracking costs on [0, 3]."""
    subs = [
        quadratic_subsystem([[0, 1], [-1, 0]], [[0], [1]], [1, 0]),
        quadratic_subsystem([[-1, 0], [1, -2]], [[1], [0]], [0, 1]),
        quadratic_subsystem([[0.5, 0], [0, 0.2]], [[1], [1]], [1, -1]),
    ]
    return SwitchedProblem(subs, quadratic_terminal(2), 0.0, 3.0, np.array([1.0, -1.0]), 1, name="lq3")


@pytest.fixture
def integrator_problem():
    """``dx/dt = u``, cost ``0.5 u^2``, terminal ``0.5 x^2`` on [0, 1]."""
    sub = SubsystemModel(
        lambda x, u: np.array(u, dtype=float),
        lambda x, u: 0.5 * float(u @ u),
        lambda x, u: np.zeros((1, 1)),
        lambda x, u: np.eye(1),
        lambda x, u: (0.5 * float(u @ u), np.zeros(1), np.array(u, dtype=float), np.zeros((1, 1)),
                      np.zeros((1, 1)), np.eye(1)),
    )
    return SwitchedProblem([sub], quadratic_terminal(1), 0.0, 1.0, np.array([1.0]), 1)


def _outer_run(name):
    defn = builtin(name)
    grid = NormalizedGrid.for_problem(defn.problem, 200)
    report = ocs2_solve(defn.problem, defn.initial_times, grid, OuterSettings(), defn.operating_points)
    return defn, grid, report


@pytest.fixture(scope="session")
def ex1_run():
    return _outer_run("ex1")


@pytest.fixture(scope="session")
def ex2_run():
    return _outer_run("ex2")
