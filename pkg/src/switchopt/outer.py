"""Outer loop over switching times: Frank-Wolfe on the order polytope.

Every point visited is evaluated with a full inner SLQ solve, warm-started
from the closest entry of a solution bag.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .gradient import GradientSettings, gradient
from .problem import (
    NormalizedGrid,
    SwitchedProblem,
    check_times,
    from_vertex_weights,
    in_polytope,
    polytope_vertices,
    vertex_weights,
)
from .rollout import InitializationError, SlqPolicy, initial_controller
from .slq import SlqError, SlqReport, SlqSettings, slq_solve


class OuterError(RuntimeError):
    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


@dataclass
class SolutionBagEntry:
    times: np.ndarray
    policy: SlqPolicy
    cost: float


class SolutionBag:
    """Converged (times, policy) pairs in insertion order."""

    def __init__(self):
        self.entries: list[SolutionBagEntry] = []

    def __len__(self):
        return len(self.entries)

    def add(self, times, policy: SlqPolicy, cost: float) -> None:
        self.entries.append(SolutionBagEntry(np.array(times, dtype=float), policy, float(cost)))

    def nearest(self, times) -> Optional[SolutionBagEntry]:
        """Entry with the smallest sum of squared time differences.

        Ties go to the lower cost, then to the earlier entry.
        """
        if not self.entries:
            return None
        t = np.asarray(times, dtype=float)
        keys = [(float(np.sum((e.times - t) ** 2)), e.cost, n) for n, e in enumerate(self.entries)]
        return self.entries[min(keys)[2]]


def warm_start_lookup(bag: SolutionBag, times) -> Optional[SlqPolicy]:
    entry = bag.nearest(times)
    return None if entry is None else entry.policy


def fw_linear_minimizer(g, n_modes: int, t_start: float, t_end: float) -> np.ndarray:
    """Vertex of the order polytope minimizing ``<g, v>``; ties go to the lowest index."""
    g = np.asarray(g, dtype=float)
    if g.size != n_modes - 1:
        raise ValueError(f"gradient has {g.size} entries, expected {n_modes - 1}")
    verts = polytope_vertices(n_modes, t_start, t_end)
    scores = [float(g @ v) for v in verts]
    return verts[int(np.argmin(scores))]


@dataclass
class OuterSettings:
    gap_tol: float = 1e-3  # relative: stop when gap <= gap_tol * (1 + |J|)
    step_tol: float = 1e-4
    max_outer_iterations: int = 30
    gamma_schedule: tuple = (1.0, 0.5, 0.25, 0.125, 0.0625)
    # "curvature": scale the schedule by the quasi-Newton line minimizer
    step_rule: str = "curvature"
    # "classic", "away" (away steps) or "pairwise"
    variant: str = "pairwise"
    warm_start: bool = True
    slq: SlqSettings = field(default_factory=SlqSettings)
    gradient: GradientSettings = field(default_factory=GradientSettings)


@dataclass
class Evaluation:
    cost: float
    report: Optional[SlqReport] = None


@dataclass
class CandidateRecord:
    times: np.ndarray
    gamma: float
    cost: float  # nan when the inner solve failed
    feasible: bool
    error: str = ""


@dataclass
class FwStepResult:
    new_times: np.ndarray
    accepted_cost: float
    fc_increment: int
    gamma: float  # 0 when no candidate improved
    evaluation: Optional[Evaluation]
    candidates: list


def _convex_point(times, vertex, gamma, t_start, t_end):
    # (1-g) t + g v rounds monotonically, so the ordering survives
    p = (1.0 - gamma) * np.asarray(times) + gamma * np.asarray(vertex)
    return np.clip(p, t_start, t_end)


def fw_step(
    times,
    vertex,
    problem: SwitchedProblem,
    grid: NormalizedGrid,
    bag: SolutionBag,
    settings: OuterSettings,
    current_cost: float,
    evaluate: Optional[Callable] = None,
    gamma_start: float = 1.0,
) -> FwStepResult:
    """Backtrack along ``times -> vertex`` and accept the first strict improvement.

    Candidates are ``gamma_start * gamma`` for ``gamma`` in the schedule.
    ``evaluate(times) -> Evaluation`` defaults to a warm-started inner solve
    that also stores converged results in ``bag``.
    """
    times = np.asarray(times, dtype=float)
    vertex = np.asarray(vertex, dtype=float)
    if evaluate is None:
        evaluate = _slq_evaluator(problem, grid, bag, settings)
    records = []
    fc = 0
    if np.array_equal(times, vertex):
        return FwStepResult(times.copy(), current_cost, 0, 0.0, None, records)
    for gamma in settings.gamma_schedule:
        gamma = gamma_start * gamma
        cand = _convex_point(times, vertex, gamma, problem.t_start, problem.t_end)
        feasible = in_polytope(cand, problem.t_start, problem.t_end)
        fc += 1
        try:
            ev = evaluate(cand)
        except (SlqError, InitializationError) as exc:
            records.append(CandidateRecord(cand, gamma, np.nan, feasible, str(exc)))
            continue
        if ev.report is not None and not ev.report.converged:
            # a stalled inner solve is no evidence of improvement
            reason = ev.report.termination_reason.value
            records.append(CandidateRecord(cand, gamma, ev.cost, feasible, f"inner solve not converged ({reason})"))
            continue
        records.append(CandidateRecord(cand, gamma, ev.cost, feasible))
        if ev.cost < current_cost:
            return FwStepResult(cand, ev.cost, fc, gamma, ev, records)
    return FwStepResult(times.copy(), current_cost, fc, 0.0, None, records)


def _away_vertex(g, lam, verts) -> int:
    # active vertex with the largest <g, v>; ties go to the lowest index
    active = [k for k in range(lam.size) if lam[k] > 0.0]
    return max(active, key=lambda k: (float(g @ verts[k]), -k))


def away_target(g, times, t_start: float, t_end: float):
    """Far end of the away-step ray, or ``None`` when no away step is possible.

    Moving away from the away vertex keeps the other weights in proportion.
    """
    lam = vertex_weights(times, t_start, t_end)
    a = _away_vertex(g, lam, polytope_vertices(lam.size, t_start, t_end))
    if lam[a] >= 1.0:
        return None
    w = lam.copy()
    w[a] = 0.0
    return from_vertex_weights(w, t_start, t_end)


def pairwise_target(g, times, t_start: float, t_end: float):
    """Point reached by moving all weight of the away vertex onto the linear-minimizer vertex.

    ``None`` when both vertices coincide.
    """
    lam = vertex_weights(times, t_start, t_end)
    verts = polytope_vertices(lam.size, t_start, t_end)
    a = _away_vertex(g, lam, verts)
    s = int(np.argmin([float(g @ v) for v in verts]))
    if a == s:
        return None
    w = lam.copy()
    w[s] += w[a]
    w[a] = 0.0
    return from_vertex_weights(w, t_start, t_end)


class CurvatureModel:
    """BFGS estimate of the Hessian of the cost in the switching times."""

    def __init__(self):
        self.H = None

    def update(self, step, dg) -> None:
        sy = float(step @ dg)
        if not np.isfinite(sy) or sy <= 1e-12 * np.linalg.norm(step) * np.linalg.norm(dg):
            return
        if self.H is None:
            self.H = (float(dg @ dg) / sy) * np.eye(step.size)
        Hs = self.H @ step
        self.H = self.H - np.outer(Hs, Hs) / float(step @ Hs) + np.outer(dg, dg) / sy

    def gamma(self, slope: float, direction) -> float:
        """Model minimizer along ``direction`` in (0, 1]; 1 when there is no model yet."""
        if self.H is None:
            return 1.0
        curv = float(direction @ self.H @ direction)
        if not np.isfinite(curv) or curv <= 0.0:
            return 1.0
        return float(min(1.0, slope / curv))


def _slq_evaluator(problem, grid, bag, settings, operating_points=None, log=None):
    def evaluate(t) -> Evaluation:
        init = warm_start_lookup(bag, t) if settings.warm_start else None
        if init is None:
            init = initial_controller(problem, t, grid, operating_points)
        rep = slq_solve(problem, t, init, grid, settings.slq)
        if log is not None:
            log.append((rep.iterations, list(rep.cost_history)))
        if rep.converged:
            bag.add(t, rep.final_policy, rep.cost)
        return Evaluation(rep.cost, rep)

    return evaluate


@dataclass
class Ocs2Report:
    optimal_times: np.ndarray
    optimal_policy: SlqPolicy
    optimal_cost: float
    outer_iterations: int
    function_calls: int
    gradient_history: list
    cost_history: list
    wall_time: float  # seconds
    converged: bool
    termination_reason: str
    inner_iterations: int = 0
    inner_cost_histories: list = field(default_factory=list)  # one per inner solve, candidates included
    times_history: list = field(default_factory=list)
    gap_history: list = field(default_factory=list)
    candidates: list = field(default_factory=list)
    final_gradient: Optional[np.ndarray] = None
    final_report: Optional[SlqReport] = None

    def feasibility_violations(self, problem: SwitchedProblem) -> int:
        pts = list(self.times_history) + [c.times for c in self.candidates]
        return sum(not in_polytope(p, problem.t_start, problem.t_end) for p in pts)


def ocs2_solve(
    problem: SwitchedProblem,
    initial_times,
    grid: NormalizedGrid,
    settings: Optional[OuterSettings] = None,
    operating_points: Optional[Sequence[tuple]] = None,
) -> Ocs2Report:
    """Alternate inner solves and Frank-Wolfe updates of the switching times.

    The search direction follows ``settings.variant``: toward the
    linear-minimizer vertex, optionally away from the worst active vertex, or
    the pairwise transfer between the two. Stops on a
    small Frank-Wolfe gap, a small accepted time update, or when no step
    along the chosen direction lowers the cost. Only ``max_outer_iterations``
    ends the run unconverged.
    """
    settings = settings or OuterSettings()
    t0 = time.monotonic()
    times = check_times(initial_times, problem.n_modes, problem.t_start, problem.t_end).copy()
    bag = SolutionBag()
    inner_log: list[tuple] = []  # (iterations, cost history) per inner solve
    evaluate = _slq_evaluator(problem, grid, bag, settings, operating_points, inner_log)
    try:
        ev = evaluate(times)
    except (SlqError, InitializationError) as exc:
        raise OuterError(f"outer iteration 0: {exc}", 0) from exc
    fc = 1
    rep = ev.report
    costs = [rep.cost]
    grads, gaps, hist, cands = [], [], [times.copy()], []
    converged = False
    reason = "max-outer-iterations"
    g = None
    g_prev = step_prev = None
    model = CurvatureModel()
    it = 0
    while it < settings.max_outer_iterations:
        it += 1
        try:
            g = gradient(problem, times, rep, grid, settings.gradient).gradient
        except RuntimeError as exc:
            raise OuterError(f"outer iteration {it}: {exc}", it) from exc
        grads.append(g)
        vertex = fw_linear_minimizer(g, problem.n_modes, problem.t_start, problem.t_end)
        gap = float(g @ (times - vertex))
        gaps.append(gap)
        if gap <= settings.gap_tol * (1.0 + abs(rep.cost)):
            converged, reason = True, "gap"
            break
        if g_prev is not None:
            model.update(step_prev, g - g_prev)
        target = vertex
        if settings.variant == "away":
            away = away_target(g, times, problem.t_start, problem.t_end)
            if away is not None and float(g @ (times - away)) > gap:
                target = away
        elif settings.variant == "pairwise":
            pw = pairwise_target(g, times, problem.t_start, problem.t_end)
            if pw is not None:
                target = pw
        slope = float(g @ (times - target))
        gamma0 = model.gamma(slope, target - times) if settings.step_rule == "curvature" else 1.0
        step = fw_step(times, target, problem, grid, bag, settings, rep.cost, evaluate, gamma0)
        fc += step.fc_increment
        cands.extend(step.candidates)
        if step.evaluation is None:
            converged, reason = True, "no-improvement"
            break
        dt = float(np.max(np.abs(step.new_times - times)))
        g_prev, step_prev = g, step.new_times - times
        times = step.new_times
        rep = step.evaluation.report
        costs.append(rep.cost)
        hist.append(times.copy())
        if dt <= settings.step_tol:
            converged, reason = True, "step"
            break
    return Ocs2Report(
        optimal_times=times,
        optimal_policy=rep.final_policy,
        optimal_cost=rep.cost,
        outer_iterations=it,
        function_calls=fc,
        gradient_history=grads,
        cost_history=costs,
        wall_time=time.monotonic() - t0,
        converged=converged,
        termination_reason=reason,
        inner_iterations=sum(n for n, _ in inner_log),
        inner_cost_histories=[h for _, h in inner_log],
        times_history=hist,
        gap_history=gaps,
        candidates=cands,
        final_gradient=g,
        final_report=rep,
    )
