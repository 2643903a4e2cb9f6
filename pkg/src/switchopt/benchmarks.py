"""Builtin benchmark problems: a 3-mode nonlinear system and its 4-state extension."""
from __future__ import annotations

from dataclasses import dataclass
from math import cos, sin
from typing import Callable, Optional

import numpy as np

from .problem import SubsystemModel, SwitchedProblem, TerminalCost


class UnknownBenchmark(KeyError):
    def __str__(self):
        return self.args[0]


@dataclass(frozen=True)
class Reference:
    cost: float
    times: tuple
    cost_rel_tol: float = 0.01
    times_abs_tol: float = 0.05


@dataclass(frozen=True)
class BenchmarkDefinition:
    name: str
    problem: SwitchedProblem
    initial_times: np.ndarray
    reference: Optional[Reference] = None
    description: str = ""
    operating_points: Optional[tuple] = None  # per-mode (x, u) for the initial controller


def quadratic_tracking_cost(x_goal: np.ndarray, nu: int, weight: float = 1.0):
    """``weight * 0.5 (|x - x_goal|^2 + |u|^2)`` with its exact expansion."""
    xg = np.asarray(x_goal, dtype=float)
    nx = xg.size
    Q = weight * np.eye(nx)
    R = weight * np.eye(nu)
    P = np.zeros((nx, nu))

    def cost(x, u):
        e = x - xg
        return weight * 0.5 * (float(e @ e) + float(u @ u))

    def quad(x, u):
        e = x - xg
        return cost(x, u), weight * e, weight * np.asarray(u, dtype=float), Q, P, R

    return cost, quad


def quadratic_terminal_cost(x_goal: np.ndarray, weight: float = 1.0) -> TerminalCost:
    xg = np.asarray(x_goal, dtype=float)
    H = weight * np.eye(xg.size)

    def value(x):
        e = x - xg
        return weight * 0.5 * float(e @ e)

    return TerminalCost(value, lambda x: weight * (x - xg), lambda x: H)


# Sign of the input term in mode 1's second state equation. The reference
# optimum (J = 5.4438 at t = (0.2324, 1.0236)) is only reproduced with -1;
# +1 is kept as the "printed" variant.
MODE1_SIGN = -1.0
MODE1_SIGN_PRINTED = 1.0


def _planar_modes(s1: float = MODE1_SIGN):
    """Vector fields and Jacobians of the three 2-state modes (single input)."""

    def f1(x, u):
        return [x[0] + u * sin(x[0]), -x[1] + s1 * u * cos(x[1])]

    def A1(x, u):
        return [[1.0 + u * cos(x[0]), 0.0], [0.0, -1.0 - s1 * u * sin(x[1])]]

    def B1(x, u):
        return [sin(x[0]), s1 * cos(x[1])]

    def f2(x, u):
        return [x[1] + u * sin(x[1]), -x[0] - u * cos(x[0])]

    def A2(x, u):
        return [[0.0, 1.0 + u * cos(x[1])], [-1.0 + u * sin(x[0]), 0.0]]

    def B2(x, u):
        return [sin(x[1]), -cos(x[0])]

    def f3(x, u):
        return [-x[0] - u * sin(x[0]), x[1] + u * cos(x[1])]

    def A3(x, u):
        return [[-1.0 - u * cos(x[0]), 0.0], [0.0, 1.0 - u * sin(x[1])]]

    def B3(x, u):
        return [-sin(x[0]), cos(x[1])]

    return [(f1, A1, B1), (f2, A2, B2), (f3, A3, B3)]


# (a, b, c, d): xdot3 = a x3 + b x3 u2, xdot4 = c x4 + d x4 u2
_EXTRA_COEFFS = [(-1.0, 2.0, 1.0, 1.0), (1.0, -3.0, 2.0, -2.0), (2.0, 1.0, -1.0, 3.0)]


def _ex1_subsystem(idx: int, cost: Callable, quad: Callable, s1: float) -> SubsystemModel:
    f, A, B = _planar_modes(s1)[idx]
    return SubsystemModel(
        dynamics=lambda x, u: np.array(f(x, u[0])),
        running_cost=cost,
        jacobian_state=lambda x, u: np.array(A(x, u[0])),
        jacobian_input=lambda x, u: np.array(B(x, u[0])).reshape(2, 1),
        running_cost_quadratics=quad,
        name=f"mode {idx + 1}",
    )


def _ex2_subsystem(idx: int, cost: Callable, quad: Callable, s1: float) -> SubsystemModel:
    f, A, B = _planar_modes(s1)[idx]
    a, b, c, d = _EXTRA_COEFFS[idx]

    def dyn(x, u):
        f12 = f(x, u[0])
        return np.array(
            [f12[0], f12[1], a * x[2] + b * x[2] * u[1], c * x[3] + d * x[3] * u[1]]
        )

    def jac_x(x, u):
        J = np.zeros((4, 4))
        J[:2, :2] = A(x, u[0])
        J[2, 2] = a + b * u[1]
        J[3, 3] = c + d * u[1]
        return J

    def jac_u(x, u):
        J = np.zeros((4, 2))
        J[:2, 0] = B(x, u[0])
        J[2, 1] = b * x[2]
        J[3, 1] = d * x[3]
        return J

    return SubsystemModel(dyn, cost, jac_x, jac_u, quad, name=f"mode {idx + 1}'")


def example1(mode1_sign: float = MODE1_SIGN) -> BenchmarkDefinition:
    """Three nonlinear 2-state modes, horizon [0, 3], x0 = (2, 3), goal (1, -1).

    Pass ``mode1_sign=MODE1_SIGN_PRINTED`` for ``dx2/dt = -x2 + u cos x2`` in
    mode 1; the default uses ``-x2 - u cos x2``.
    """
    x_goal = np.array([1.0, -1.0])
    cost, quad = quadratic_tracking_cost(x_goal, 1)
    problem = SwitchedProblem(
        [_ex1_subsystem(i, cost, quad, mode1_sign) for i in range(3)],
        quadratic_terminal_cost(x_goal),
        0.0,
        3.0,
        np.array([2.0, 3.0]),
        1,
        name="ex1",
    )
    return BenchmarkDefinition(
        "ex1",
        problem,
        np.array([1.0, 2.0]),
        Reference(5.4438, (0.2324, 1.0236)),
        "3-mode nonlinear switched system, 2 states, 1 input",
    )


def example2(mode1_sign: float = MODE1_SIGN) -> BenchmarkDefinition:
    """``example1`` with states x3, x4 driven bilinearly by a second input."""
    x_goal = np.array([1.0, -1.0, 2.0, 2.0])
    cost, quad = quadratic_tracking_cost(x_goal, 2)
    problem = SwitchedProblem(
        [_ex2_subsystem(i, cost, quad, mode1_sign) for i in range(3)],
        quadratic_terminal_cost(x_goal),
        0.0,
        3.0,
        np.array([2.0, 3.0, 1.0, 1.0]),
        2,
        name="ex2",
    )
    # u2 = -a/b keeps x3 stationary in each mode; with u2 = 0 the default
    # controller lets x4 grow until the bilinear terms make the rollout stiff
    x0 = problem.x0
    ops = tuple((x0.copy(), np.array([0.0, -a / b])) for a, b, _, _ in _EXTRA_COEFFS)
    return BenchmarkDefinition(
        "ex2",
        problem,
        np.array([1.0, 2.0]),
        Reference(10.3888, (0.2973, 1.5978)),
        "ex1 augmented with two states and a second input",
        ops,
    )


REGISTRY = {"ex1": example1, "ex2": example2}


def builtin(name: str) -> BenchmarkDefinition:
    try:
        return REGISTRY[name]()
    except KeyError:
        raise UnknownBenchmark(
            f"unknown benchmark {name!r}; available: {', '.join(sorted(REGISTRY))}"
        ) from None


def available() -> list[str]:
    return sorted(REGISTRY)
