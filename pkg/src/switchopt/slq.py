"""Inner solver for fixed switching times: sequential linear-quadratic iterations."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .lq import LqModel, linearize
from .problem import NormalizedGrid, SwitchedProblem
from .rollout import RolloutDiverged, SlqPolicy, Trajectory, rollout


class RiccatiError(RuntimeError):
    def __init__(self, message: str, node: int):
        super().__init__(message)
        self.node = node


class LineSearchError(RuntimeError):
    pass


class SlqError(RuntimeError):
    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


# Predicted relative decrease below which a failed line search still counts
# as convergence.
STALL_REL_DECREASE = 1e-6


class Termination(str, enum.Enum):
    FEEDFORWARD_SMALL = "feedforward-small"
    MAX_ITERATIONS = "max-iterations"
    LINE_SEARCH_FAILED = "line-search-failed"


@dataclass
class SlqSettings:
    l_min: float = 1e-3
    max_iterations: int = 50
    line_search_depth: int = 10
    shrink: float = 0.5

    def alpha_schedule(self) -> list[float]:
        return [self.shrink**k for k in range(self.line_search_depth)]


@dataclass
class RiccatiSolution:
    """Value-function coefficients and gains at every node.

    ``s`` is assembled from two accumulated integrals so that only the scalar
    part depends on the step size ``alpha``.
    """

    S: np.ndarray
    sv: np.ndarray
    s: np.ndarray
    L: np.ndarray
    l: np.ndarray
    alpha: float
    qf: float
    cost_part: np.ndarray
    ff_part: np.ndarray

    def with_alpha(self, alpha: float) -> "RiccatiSolution":
        s = self.qf + self.cost_part - alpha * (2.0 - alpha) * self.ff_part
        return RiccatiSolution(self.S, self.sv, s, self.L, self.l, alpha, self.qf, self.cost_part, self.ff_part)

    @property
    def value(self) -> float:
        """Predicted cost ``s(0)``."""
        return float(self.s[0])


def r_solves(model: LqModel):
    """``R^-1 B^T``, ``R^-1 P^T`` and ``R^-1 r`` for every sample of the model."""
    R = model.R
    rhs = np.concatenate(
        [np.swapaxes(model.B, -1, -2), np.swapaxes(model.P, -1, -2), model.rv[..., None]], axis=-1
    )
    sol = np.linalg.solve(R, rhs)
    nx = model.A.shape[-1]
    return (
        np.ascontiguousarray(sol[..., :nx]),
        np.ascontiguousarray(sol[..., nx : 2 * nx]),
        np.ascontiguousarray(sol[..., 2 * nx]),
    )


def solve_riccati(model: LqModel, alpha: float, grid: NormalizedGrid, solves=None) -> RiccatiSolution:
    """Integrate the value-function equations backward from ``z = I`` with RK4."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    RiBt, RiPt, Rir = solves if solves is not None else r_solves(model)
    S, sv, cq, cl, L, l, bad = kernels.riccati_sweep(
        model.A, model.B, model.Q, model.R, model.qv, model.q,
        RiBt, RiPt, Rir,
        np.ascontiguousarray(model.step_dur, dtype=float), grid.dz, grid.nodes_per_mode,
        np.ascontiguousarray(model.Qf), np.ascontiguousarray(model.qvf, dtype=float),
    )
    if bad >= 0:
        raise RiccatiError(f"Riccati sweep produced non-finite values at node {bad}", bad)
    sol = RiccatiSolution(
        np.asarray(S), np.asarray(sv), None, np.asarray(L), np.asarray(l), alpha,
        model.qf, np.asarray(cq), np.asarray(cl),
    )
    return sol.with_alpha(alpha)


def update_policy(nominal: Trajectory, riccati: RiccatiSolution, alpha: float) -> SlqPolicy:
    """Policy ``u = u_nom + alpha l + L (x - x_nom)`` around the nominal."""
    M = nominal.x.shape[0] - 1
    N = M // (nominal.u.shape[0] - M)
    x_local = nominal.x[np.arange(nominal.u.shape[0]) - np.arange(nominal.u.shape[0]) // (N + 1)]
    return SlqPolicy(nominal.u.copy(), riccati.l.copy(), riccati.L.copy(), x_local, float(alpha))


def feedforward_norm(l: np.ndarray) -> float:
    """RMS over (mode-local) nodes of the Euclidean norm of the feedforward update."""
    return float(np.sqrt(np.mean(np.sum(l * l, axis=1))))


def line_search(
    problem: SwitchedProblem,
    times,
    nominal: Trajectory,
    riccati: RiccatiSolution,
    grid: NormalizedGrid,
    alpha_grid,
):
    """First step size whose rollout cost is strictly below the nominal cost.

    Returns ``(alpha, trajectory, policy)``, or ``None`` when no candidate
    improves. Raises :class:`LineSearchError` if every candidate diverged.
    """
    diverged = 0
    alphas = list(alpha_grid)
    for alpha in alphas:
        policy = update_policy(nominal, riccati, alpha)
        try:
            traj = rollout(problem, times, policy, grid)
        except RolloutDiverged:
            diverged += 1
            continue
        if traj.cost < nominal.cost:
            return alpha, traj, policy
    if alphas and diverged == len(alphas):
        raise LineSearchError("every line-search candidate rollout diverged")
    return None


@dataclass
class SlqReport:
    iterations: int
    cost_history: list
    final_policy: SlqPolicy
    final_trajectory: Trajectory
    converged: bool
    termination_reason: Termination
    value_predictions: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    ff_norm: float = np.nan
    model: Optional[LqModel] = None
    riccati: Optional[RiccatiSolution] = None

    @property
    def cost(self) -> float:
        return self.final_trajectory.cost


def slq_solve(
    problem: SwitchedProblem,
    times,
    init_policy: SlqPolicy,
    grid: NormalizedGrid,
    settings: Optional[SlqSettings] = None,
) -> SlqReport:
    """Iterate rollout, LQ approximation, Riccati sweep and line search.

    Stops when the RMS feedforward norm falls below ``l_min``, when the line
    search finds no decrease, or after ``max_iterations`` accepted updates.
    The model and Riccati solution kept in the report belong to the final
    nominal trajectory.
    """
    settings = settings or SlqSettings()
    alphas = settings.alpha_schedule()
    try:
        traj = rollout(problem, times, init_policy, grid)
    except RolloutDiverged as exc:
        raise SlqError(f"initial rollout diverged: {exc}", 0) from exc
    policy = init_policy
    costs = [traj.cost]
    predictions = []
    accepted = []
    it = 0
    while True:
        try:
            model = linearize(problem, times, traj, grid)
            solves = r_solves(model)
            ric = solve_riccati(model, 1.0, grid, solves)
        except RiccatiError as exc:
            raise SlqError(f"iteration {it}: {exc}", it) from exc
        ff = feedforward_norm(ric.l)
        if ff < settings.l_min:
            reason = Termination.FEEDFORWARD_SMALL
            break
        if it >= settings.max_iterations:
            reason = Termination.MAX_ITERATIONS
            break
        try:
            found = line_search(problem, times, traj, ric, grid, alphas)
        except LineSearchError as exc:
            raise SlqError(f"iteration {it}: {exc}", it) from exc
        if found is None:
            reason = Termination.LINE_SEARCH_FAILED
            break
        alpha, traj, policy = found
        costs.append(traj.cost)
        predictions.append(ric.with_alpha(alpha).value)
        accepted.append(alpha)
        it += 1
    converged = reason is Termination.FEEDFORWARD_SMALL or (
        # the line search stalls once the predicted decrease is below the
        # mismatch between the LQ model and the discrete rollout cost
        reason is Termination.LINE_SEARCH_FAILED and ric.ff_part[0] <= STALL_REL_DECREASE * (1.0 + abs(traj.cost))
    )
    return SlqReport(
        iterations=it,
        cost_history=costs,
        final_policy=policy,
        final_trajectory=traj,
        converged=converged,
        termination_reason=reason,
        value_predictions=predictions,
        alphas=accepted,
        ff_norm=ff,
        model=model,
        riccati=ric,
    )
