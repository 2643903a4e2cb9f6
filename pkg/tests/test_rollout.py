import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from switchopt.benchmarks import builtin
from switchopt.problem import NormalizedGrid, SubsystemModel, SwitchedProblem, TerminalCost, repeat_mode
from switchopt.rollout import (
    InitializationError,
    RolloutDiverged,
    SlqPolicy,
    evaluate_cost,
    initial_controller,
    rollout,
)

from conftest import quadratic_subsystem, quadratic_terminal


def scalar_mode(a, q=1.0):
    """``dx/dt = a x + u`` with cost ``0.5 (q x^2 + u^2)``."""
    return SubsystemModel(
        lambda x, u: a * x + u,
        lambda x, u: 0.5 * (q * float(x @ x) + float(u @ u)),
        lambda x, u: np.array([[a]]),
        lambda x, u: np.eye(1),
        lambda x, u: (0.5 * (q * float(x @ x) + float(u @ u)), q * x, np.array(u, dtype=float),
                      q * np.eye(1), np.zeros((1, 1)), np.eye(1)),
    )


def test_zero_vector_field_keeps_initial_state():
    still = SubsystemModel(lambda x, u: np.zeros(2), lambda x, u: 0.0)
    p = SwitchedProblem([still] * 3, quadratic_terminal(2), 0.0, 3.0, np.array([0.3, -2.0]), 1)
    g = NormalizedGrid.for_problem(p, 20)
    traj = rollout(p, [1.0, 2.0], SlqPolicy.open_loop([0.7], 2, g), g)
    assert np.all(traj.x == p.x0)


def test_constant_input_integrates_exactly(integrator_problem):
    p = SwitchedProblem(integrator_problem.subsystems, integrator_problem.terminal_cost, 0.0, 1.0, [0.0], 1)
    g = NormalizedGrid.for_problem(p, 200)
    traj = rollout(p, [], SlqPolicy.open_loop([1.0], 1, g), g)
    assert traj.x_final[0] == pytest.approx(1.0, abs=1e-10)
    assert traj.x[0, 0] == 0.0
    # 0.5 * int 1 dt + 0.5 * 1^2
    assert traj.cost == pytest.approx(1.0, abs=1e-12)


def test_policy_reproduces_feedforward_at_reference():
    g = NormalizedGrid(2, 5)
    rng = np.random.default_rng(3)
    pol = SlqPolicy(
        rng.normal(size=(g.n_local, 2)), rng.normal(size=(g.n_local, 2)),
        rng.normal(size=(g.n_local, 2, 3)), rng.normal(size=(g.n_local, 3)), 0.0,
    )
    for j in range(g.n_local):
        assert np.array_equal(pol.at_local(j, pol.x_ref[j]), pol.u_ff[j])
    for k, z in enumerate(g.z_nodes):
        j = g.node_to_local[k]
        assert np.array_equal(pol(z, pol.x_ref[j], g), pol.u_ff[j])


def test_terminal_only_cost_is_evaluated():
    still = SubsystemModel(lambda x, u: np.zeros(2), lambda x, u: 0.0)
    p = SwitchedProblem([still], TerminalCost(lambda x: float(x @ x)), 0.0, 1.0, np.array([1.0, -1.0]), 1)
    g = NormalizedGrid.for_problem(p, 10)
    traj = rollout(p, [], SlqPolicy.open_loop([0.0], 2, g), g)
    assert evaluate_cost(p, [], traj) == 2.0
    assert traj.cost == 2.0


def test_zero_duration_mode_contributes_nothing():
    p = builtin("ex1").problem
    g = NormalizedGrid.for_problem(p, 50)
    traj = rollout(p, [1.5, 1.5], initial_controller(p, [1.5, 1.5], g), g)
    assert traj.mode_costs[1] == 0.0
    assert np.all(traj.x[50:101] == traj.x[50])


@pytest.mark.parametrize("name", ["ex1", "ex2"])
def test_rollout_cost_matches_quadrature(name):
    defn = builtin(name)
    p = defn.problem
    g = NormalizedGrid.for_problem(p, 200)
    traj = rollout(p, defn.initial_times, initial_controller(p, defn.initial_times, g, defn.operating_points), g)
    assert evaluate_cost(p, defn.initial_times, traj) == pytest.approx(traj.cost, rel=1e-4)
    assert evaluate_cost(p, defn.initial_times, traj, method="simpson") == pytest.approx(traj.cost, rel=1e-6)


def test_converged_ex1_cost(ex1_run):
    defn, grid, rep = ex1_run
    traj = rollout(defn.problem, rep.optimal_times, rep.optimal_policy, grid)
    assert traj.cost == pytest.approx(5.4438, rel=0.01)
    assert evaluate_cost(defn.problem, rep.optimal_times, traj) == pytest.approx(traj.cost, rel=1e-4)


@pytest.mark.parametrize("name, u", [("ex1", [0.3]), ("ex2", [0.3, -0.2])])
def test_rk4_order(name, u):
    p = builtin(name).problem
    t = [1.0, 2.0]

    def terminal(N):
        g = NormalizedGrid.for_problem(p, N)
        return rollout(p, t, SlqPolicy.open_loop(u, p.n_x, g), g).x_final

    ref = terminal(160)
    e1 = np.linalg.norm(terminal(40) - ref)
    e2 = np.linalg.norm(terminal(80) - ref)
    assert e1 / e2 >= 12.0


def test_zero_duration_insertion_leaves_state_unchanged():
    p = builtin("ex1").problem
    t = np.array([0.8, 1.9])
    g = NormalizedGrid.for_problem(p, 100)
    base = rollout(p, t, initial_controller(p, t, g), g)
    for m in range(3):
        q = repeat_mode(p, m)
        chain = np.concatenate([[0.0], t, [3.0]])
        tq = np.insert(chain, m + 1, chain[m + 1])[1:-1]
        gq = NormalizedGrid.for_problem(q, 100)
        traj = rollout(q, tq, initial_controller(q, tq, gq), gq)
        assert np.max(np.abs(traj.x_final - base.x_final)) < 1e-10


def test_rollout_is_deterministic():
    defn = builtin("ex2")
    p = defn.problem
    g = NormalizedGrid.for_problem(p, 60)
    pol = initial_controller(p, defn.initial_times, g, defn.operating_points)
    a = rollout(p, defn.initial_times, pol, g)
    b = rollout(p, defn.initial_times, pol, g)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.u, b.u) and a.cost == b.cost


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_rollout_with_zero_field_any_times(a, b):
    still = SubsystemModel(lambda x, u: np.zeros(1), lambda x, u: float(u @ u))
    p = SwitchedProblem([still] * 3, quadratic_terminal(1), 0.0, 1.0, np.array([2.0]), 1)
    g = NormalizedGrid.for_problem(p, 8)
    traj = rollout(p, sorted([a, b]), SlqPolicy.open_loop([1.0], 1, g), g)
    assert np.all(traj.x == 2.0)
    assert traj.cost == pytest.approx(1.0 + 2.0, rel=1e-12)


def test_stable_scalar_initial_controller():
    p = SwitchedProblem([scalar_mode(-1.0)], quadratic_terminal(1), 0.0, 2.0, np.array([1.0]), 1)
    g = NormalizedGrid.for_problem(p, 50)
    pol = initial_controller(p, [], g, [(np.zeros(1), np.zeros(1))])
    assert np.all(np.isfinite(pol.L))
    assert pol.alpha == 0.0 and np.all(pol.l == 0.0)
    traj = rollout(p, [], pol, g)
    assert np.max(np.abs(traj.x)) <= 1.0


@pytest.mark.parametrize("name", ["ex1", "ex2"])
def test_benchmark_initial_controller_is_finite(name):
    defn = builtin(name)
    g = NormalizedGrid.for_problem(defn.problem, 200)
    pol = initial_controller(defn.problem, defn.initial_times, g, defn.operating_points)
    traj = rollout(defn.problem, defn.initial_times, pol, g)
    assert np.isfinite(traj.cost)
    ops = defn.operating_points or [(defn.problem.x0, np.zeros(defn.problem.n_u))] * 3
    for i in range(3):
        assert np.all(pol.u_ff[g.local_modes == i] == ops[i][1])


def test_costless_unstable_mode_has_zero_gain_and_diverges():
    p = SwitchedProblem([scalar_mode(1.0, q=0.0)], TerminalCost(lambda x: 0.0, lambda x: np.zeros(1),
                        lambda x: np.zeros((1, 1))), 0.0, 30.0, np.array([1.0]), 1)
    # running cost 0.5 u^2 only: there is nothing to regulate
    g = NormalizedGrid.for_problem(p, 300)
    pol = initial_controller(p, [], g)
    assert np.all(pol.L == 0.0)
    with pytest.raises(RolloutDiverged) as info:
        rollout(p, [], pol, g)
    assert 0 < info.value.last_index < g.n_steps


def test_initial_controller_needs_one_point_per_mode():
    p = builtin("ex1").problem
    g = NormalizedGrid.for_problem(p, 10)
    with pytest.raises(InitializationError):
        initial_controller(p, [1.0, 2.0], g, [(p.x0, np.zeros(1))])


def test_rollout_rejects_mismatched_policy():
    p = builtin("ex1").problem
    pol = SlqPolicy.open_loop([0.0], 2, NormalizedGrid.for_problem(p, 10))
    with pytest.raises(ValueError):
        rollout(p, [1.0, 2.0], pol, NormalizedGrid.for_problem(p, 20))
