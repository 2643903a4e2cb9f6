"""Forward simulation of the normalized-time system under an affine policy."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .problem import NormalizedGrid, SwitchedProblem, check_times, map_z_to_t, mode_durations

DIVERGENCE_BOUND = 1e8


class RolloutDiverged(RuntimeError):
    """The state left the finite region; ``last_index`` is the last valid node."""

    def __init__(self, message: str, last_index: int):
        super().__init__(message)
        self.last_index = last_index


class InitializationError(RuntimeError):
    pass


@dataclass
class SlqPolicy:
    """Time-varying affine state feedback ``u = u_ff + alpha*l + L (x - x_ref)``.

    Arrays live on the grid's mode-local nodes (``grid.n_local`` entries), so
    the law can jump at a switch. Inside an integration step the two end
    laws are blended linearly in ``z``.
    """

    u_ff: np.ndarray  # (n_local, nu)
    l: np.ndarray  # (n_local, nu)
    L: np.ndarray  # (n_local, nu, nx)
    x_ref: np.ndarray  # (n_local, nx)
    alpha: float = 0.0

    @property
    def n_local(self) -> int:
        return self.u_ff.shape[0]

    def at_local(self, j: int, x: np.ndarray) -> np.ndarray:
        return self.u_ff[j] + self.alpha * self.l[j] + self.L[j] @ (x - self.x_ref[j])

    def __call__(self, z: float, x: np.ndarray, grid: NormalizedGrid) -> np.ndarray:
        """Evaluate at normalized time ``z``; switching nodes use the right limit."""
        N = grid.nodes_per_mode
        k = min(int(np.floor(z * N)), grid.n_steps - 1)
        theta = z * N - k
        j = k + k // N
        if theta == 0.0:
            return self.at_local(j, x)
        if theta == 1.0 and k == grid.n_steps - 1:
            return self.at_local(j + 1, x)
        return (1.0 - theta) * self.at_local(j, x) + theta * self.at_local(j + 1, x)

    def copy(self) -> "SlqPolicy":
        return SlqPolicy(self.u_ff.copy(), self.l.copy(), self.L.copy(), self.x_ref.copy(), self.alpha)

    @classmethod
    def open_loop(cls, u, nx: int, grid: NormalizedGrid) -> "SlqPolicy":
        """Feedback-free policy; ``u`` is one input vector or one per local node."""
        u = np.asarray(u, dtype=float)
        n = grid.n_local
        u = np.broadcast_to(u, (n, u.shape[-1])).copy()
        nu = u.shape[1]
        return cls(u, np.zeros((n, nu)), np.zeros((n, nu, nx)), np.zeros((n, nx)), 0.0)


@dataclass
class Trajectory:
    """Rollout result.

    ``x`` holds one state per grid node (the state is continuous across
    switches). ``u`` is stored on mode-local nodes, so switching nodes carry
    both one-sided inputs. ``x_mid``/``u_mid`` are cubic Hermite estimates of
    the state at each step midpoint and the policy input there; the LQ model
    needs them for the interior RK4 stages of the backward sweeps.
    """

    z: np.ndarray
    t: np.ndarray
    x: np.ndarray  # (M+1, nx)
    u: np.ndarray  # (n_local, nu)
    x_mid: np.ndarray  # (M, nx)
    u_mid: np.ndarray  # (M, nu)
    cost: float
    terminal_cost: float
    mode_costs: np.ndarray  # duration-weighted running-cost integral per mode

    @property
    def x_final(self) -> np.ndarray:
        return self.x[-1]

    def u_nodes(self, grid: NormalizedGrid) -> np.ndarray:
        """One input per node, right limit at switching nodes."""
        return self.u[grid.node_to_local]


def rollout(
    problem: SwitchedProblem,
    times,
    policy: SlqPolicy,
    grid: NormalizedGrid,
) -> Trajectory:
    """Integrate ``dx/dz = dur_i f_i(x, u)`` with fixed-step RK4.

    The running cost rides along as an extra state so its accuracy follows
    the integrator order.
    """
    times = check_times(times, problem.n_modes, problem.t_start, problem.t_end)
    if policy.n_local != grid.n_local:
        raise ValueError(f"policy has {policy.n_local} local nodes, grid needs {grid.n_local}")
    durs = mode_durations(times, problem.t_start, problem.t_end)
    N = grid.nodes_per_mode
    M = grid.n_steps
    h = grid.dz
    nx, nu = problem.n_x, problem.n_u
    xs = np.empty((M + 1, nx))
    us = np.empty((grid.n_local, nu))
    x_mid = np.empty((M, nx))
    u_mid = np.empty((M, nu))
    mode_costs = np.zeros(problem.n_modes)

    xs[0] = problem.x0
    x = problem.x0.copy()
    law = policy.at_local
    for i, sub in enumerate(problem.subsystems):
        dur = durs[i]
        f = sub.dynamics
        c = sub.running_cost
        acc = 0.0
        for k in range(i * N, (i + 1) * N):
            j = k + i
            u0 = law(j, x)
            us[j] = u0
            # zero-duration modes leave the state untouched
            if dur == 0.0:
                xs[k + 1] = x
                x_mid[k] = x
                u_mid[k] = 0.5 * (u0 + law(j + 1, x))
                continue
            k1 = dur * np.asarray(f(x, u0), dtype=float)
            c1 = c(x, u0)
            xa = x + 0.5 * h * k1
            ua = 0.5 * (law(j, xa) + law(j + 1, xa))
            k2 = dur * np.asarray(f(xa, ua), dtype=float)
            c2 = c(xa, ua)
            xb = x + 0.5 * h * k2
            ub = 0.5 * (law(j, xb) + law(j + 1, xb))
            k3 = dur * np.asarray(f(xb, ub), dtype=float)
            c3 = c(xb, ub)
            xc = x + h * k3
            uc = law(j + 1, xc)
            k4 = dur * np.asarray(f(xc, uc), dtype=float)
            c4 = c(xc, uc)
            x_new = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            acc += (h / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
            if not np.all(np.isfinite(x_new)) or np.max(np.abs(x_new)) > DIVERGENCE_BOUND:
                raise RolloutDiverged(f"rollout diverged in mode {i + 1} after node {k}", k)
            # cubic Hermite midpoint from the end slopes
            xm = 0.5 * (x + x_new) + (h / 8.0) * (k1 - k4)
            x_mid[k] = xm
            u_mid[k] = 0.5 * (law(j, xm) + law(j + 1, xm))
            x = x_new
            xs[k + 1] = x
        us[(i + 1) * (N + 1) - 1] = law((i + 1) * (N + 1) - 1, x)
        mode_costs[i] = dur * acc
    phi = problem.terminal_cost(x)
    t_nodes = map_z_to_t(grid.z_nodes, times, problem.t_start, problem.t_end)
    return Trajectory(
        z=np.asarray(grid.z_nodes).copy(),
        t=t_nodes,
        x=xs,
        u=us,
        x_mid=x_mid,
        u_mid=u_mid,
        cost=float(phi + mode_costs.sum()),
        terminal_cost=float(phi),
        mode_costs=mode_costs,
    )


def evaluate_cost(
    problem: SwitchedProblem,
    times,
    trajectory: Trajectory,
    grid: Optional[NormalizedGrid] = None,
    method: str = "trapezoid",
) -> float:
    """Recompute the total cost from stored samples.

    ``method="trapezoid"`` uses node values only; ``"simpson"`` also uses the
    stored step midpoints.
    """
    durs = mode_durations(times, problem.t_start, problem.t_end)
    I = problem.n_modes
    M = trajectory.x.shape[0] - 1
    N = M // I
    h = 1.0 / N
    total = problem.terminal_cost(trajectory.x[-1])
    for i, sub in enumerate(problem.subsystems):
        if durs[i] == 0.0:
            continue
        vals = np.array(
            [
                sub.running_cost(trajectory.x[i * N + j], trajectory.u[i * (N + 1) + j])
                for j in range(N + 1)
            ]
        )
        if method == "trapezoid":
            integral = h * (vals.sum() - 0.5 * (vals[0] + vals[-1]))
        elif method == "simpson":
            mids = np.array(
                [sub.running_cost(trajectory.x_mid[k], trajectory.u_mid[k]) for k in range(i * N, (i + 1) * N)]
            )
            integral = (h / 6.0) * (vals[:-1].sum() + vals[1:].sum() + 4.0 * mids.sum())
        else:
            raise ValueError(f"unknown quadrature {method!r}")
        total += durs[i] * integral
    return float(total)


def initial_controller(
    problem: SwitchedProblem,
    times,
    grid: NormalizedGrid,
    operating_points: Optional[Sequence[tuple]] = None,
) -> SlqPolicy:
    """Stabilizing starting policy from one LQ approximation per mode.

    Each mode is linearized at its operating point (default ``(x0, 0)``); the
    piecewise-constant LQ model is solved with the Riccati sweep and the
    resulting feedback acts around the operating points.
    """
    from .lq import constant_model
    from .slq import RiccatiError, solve_riccati

    I = problem.n_modes
    nx, nu = problem.n_x, problem.n_u
    if operating_points is None:
        operating_points = [(problem.x0.copy(), np.zeros(nu))] * I
    if len(operating_points) != I:
        raise InitializationError(f"need {I} operating points, got {len(operating_points)}")
    ops = [(np.asarray(x, dtype=float), np.asarray(u, dtype=float)) for x, u in operating_points]
    model = constant_model(problem, times, grid, ops)
    try:
        ric = solve_riccati(model, 0.0, grid)
    except RiccatiError as exc:
        raise InitializationError(
            f"Riccati sweep failed for the operating-point model ({exc}); try different operating points"
        ) from exc
    modes = grid.local_modes
    u_ff = np.array([ops[m][1] for m in modes])
    x_ref = np.array([ops[m][0] for m in modes])
    return SlqPolicy(u_ff, np.zeros((grid.n_local, nu)), ric.L.copy(), x_ref, 0.0)


def with_alpha(policy: SlqPolicy, alpha: float) -> SlqPolicy:
    return replace(policy, alpha=alpha)
