"""Switching-time gradient of the converged inner cost.

Two sweeps per switching time: a forward sweep for the state sensitivity
under the fixed rollout policy, then a backward sweep of the sensitivity
Riccati equations whose initial scalar is the gradient entry. A finite
difference oracle is provided for validation.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .lq import LqModel
from .problem import NormalizedGrid, SwitchedProblem, check_times
from .rollout import RolloutDiverged, SlqPolicy, rollout
from .slq import RiccatiSolution, SlqReport, SlqSettings, r_solves, slq_solve


class SensitivityError(RuntimeError):
    def __init__(self, message: str, node: int):
        super().__init__(message)
        self.node = node


class OracleError(RuntimeError):
    pass


@dataclass
class GradientSettings:
    """``l_sign`` multiplies the feedback term of the input sensitivity.

    ``refinement_passes`` re-runs the forward sweep with the feedforward
    sensitivity from the previous backward sweep (0 disables it).
    ``alpha`` enters the scalar sensitivity equation only.
    """

    l_sign: float = 1.0
    alpha: float = 1.0
    refinement_passes: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.l_sign not in (1.0, -1.0):
            raise ValueError("l_sign must be +1 or -1")
        if not 0 <= self.refinement_passes <= 3:
            raise ValueError("refinement_passes must be in 0..3")


@dataclass
class SensitivityBundle:
    """Sensitivities with respect to one switching time ``t_j`` (``j`` is 1-based)."""

    j: int
    dx: np.ndarray  # (M+1, nx)
    du: np.ndarray  # (n_local, nu)
    dS: np.ndarray  # (M+1, nx, nx)
    dsv: np.ndarray  # (M+1, nx)
    dsc: np.ndarray  # (M+1,)

    @property
    def gradient(self) -> float:
        return float(self.dsc[0])


@dataclass
class GradientResult:
    gradient: np.ndarray
    bundles: list = field(default_factory=list)
    inner_converged: bool = True
    settings: Optional[GradientSettings] = None

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.gradient, dtype=dtype)


def switch_indicator(i: int, j: int, n_modes: int) -> int:
    """``delta(i, j) - delta(i-1, j)`` for mode ``i`` (1..I) and switch ``j`` (1..I-1)."""
    if not 1 <= i <= n_modes:
        raise IndexError(f"mode index {i} outside 1..{n_modes}")
    if not 1 <= j <= n_modes - 1:
        raise IndexError(f"switching index {j} outside 1..{n_modes - 1}")
    return int(i == j) - int(i - 1 == j)


def _step_indicator(grid: NormalizedGrid, j: Optional[int]) -> np.ndarray:
    # j=None: no switching time is perturbed, only the supplied sources act
    if j is None:
        return np.zeros(grid.n_steps)
    modes = grid.step_modes + 1
    return (modes == j).astype(float) - (modes == j + 1).astype(float)


def _gain_triples(policy: SlqPolicy, grid: NormalizedGrid) -> np.ndarray:
    # start, midpoint and end of each step, matching the rollout's blending
    a = grid.step_start_local
    L0 = policy.L[a]
    L1 = policy.L[a + 1]
    return np.ascontiguousarray(np.stack([L0, 0.5 * (L0 + L1), L1], axis=1))


def _sample_triples(nodes: np.ndarray, mids: np.ndarray) -> np.ndarray:
    return np.stack([nodes[:-1], mids, nodes[1:]], axis=1)


def forward_sensitivity(
    problem: SwitchedProblem,
    times,
    nominal,
    policy: SlqPolicy,
    model: LqModel,
    j: int,
    grid: NormalizedGrid,
    l_sign: float = 1.0,
    du_extra: Optional[np.ndarray] = None,
):
    """State and input sensitivity to ``t_j`` under the fixed policy.

    Returns ``(dx, du, dx_triples, du_triples)``; nodes for ``dx``, mode-local
    nodes for ``du``, and per-step ``[start, mid, end]`` samples for both.
    """
    check_times(times, problem.n_modes, problem.t_start, problem.t_end)
    M = grid.n_steps
    nu = problem.n_u
    Lp = _gain_triples(policy, grid)
    extra = np.zeros((M, 3, nu)) if du_extra is None else np.ascontiguousarray(du_extra, dtype=float)
    ind = _step_indicator(grid, j)
    dx, dx_mid, bad = kernels.sens_forward_sweep(
        model.A, model.B, model.f, Lp, extra,
        np.ascontiguousarray(model.step_dur, dtype=float), ind, grid.dz, float(l_sign),
    )
    if bad >= 0:
        raise SensitivityError(f"forward sensitivity became non-finite at node {bad}", bad)
    dx = np.asarray(dx)
    dx3 = _sample_triples(dx, np.asarray(dx_mid))
    du3 = l_sign * np.einsum("ksux,ksx->ksu", Lp, dx3) + extra
    a = grid.step_start_local
    du = np.empty((grid.n_local, nu))
    du[a] = du3[:, 0]
    du[a + 1] = du3[:, 2]
    return dx, du, dx3, du3


def cost_coefficient_sensitivity(model: LqModel, dx, du):
    """``dq = Q dx + P du``, ``dr = P^T dx + R du``, ``dqs = qv.dx + rv.du``.

    Works on any matching leading shape, e.g. the model's step triples.
    """
    dq = np.einsum("...ab,...b->...a", model.Q, dx) + np.einsum("...ab,...b->...a", model.P, du)
    dr = np.einsum("...ba,...b->...a", model.P, dx) + np.einsum("...ab,...b->...a", model.R, du)
    dqs = np.einsum("...a,...a->...", model.qv, dx) + np.einsum("...a,...a->...", model.rv, du)
    return dq, dr, dqs


def backward_sensitivity(
    model: LqModel,
    riccati: Optional[RiccatiSolution],
    alpha: float,
    j: Optional[int],
    dq,
    dr,
    dqs,
    dx_terminal,
    grid: NormalizedGrid,
    solves=None,
):
    """Integrate the sensitivity Riccati equations backward from ``z = I``.

    ``S`` and ``s`` are re-integrated alongside their sensitivities so every
    RK4 stage sees consistent gains. ``j=None`` drops the switching source
    terms. Returns ``(dS, dsv, dsc)`` on nodes.
    """
    RiBt, RiPt, Rir = solves if solves is not None else r_solves(model)
    Ridr = np.linalg.solve(model.R, np.asarray(dr, dtype=float)[..., None])[..., 0]
    dxT = np.asarray(dx_terminal, dtype=float)
    ind = _step_indicator(grid, j)
    S, sv, dS, dsv, dsc, bad = kernels.sens_backward_sweep(
        model.A, model.B, model.Q, model.R, model.qv, model.q,
        RiBt, RiPt, Rir,
        np.ascontiguousarray(model.step_dur, dtype=float), ind, grid.dz, float(alpha),
        np.ascontiguousarray(dq, dtype=float), np.ascontiguousarray(Ridr),
        np.ascontiguousarray(dqs, dtype=float),
        np.ascontiguousarray(model.Qf), np.ascontiguousarray(model.qvf, dtype=float),
        model.Qf @ dxT, float(model.qvf @ dxT),
    )
    if bad >= 0:
        raise SensitivityError(f"backward sensitivity became non-finite at node {bad}", bad)
    if riccati is not None and not np.allclose(S[0], riccati.S[0], rtol=1e-8, atol=1e-10):
        raise SensitivityError("Riccati solution does not belong to this model", 0)
    return np.asarray(dS), np.asarray(dsv), np.asarray(dsc)


def _dl_triples(model: LqModel, solves, dr3, dsv, grid):
    # feedforward sensitivity at step samples; midpoint from the mean of the ends
    RiBt = solves[0]
    dsv3 = np.stack([dsv[:-1], 0.5 * (dsv[:-1] + dsv[1:]), dsv[1:]], axis=1)
    Ridr = np.linalg.solve(model.R, dr3[..., None])[..., 0]
    return -(Ridr + np.einsum("ksux,ksx->ksu", RiBt, dsv3))


def _one_switch(problem, times, report: SlqReport, grid, j, settings: GradientSettings, solves):
    model = report.model
    traj = report.final_trajectory
    policy = report.final_policy
    extra = None
    for _ in range(settings.refinement_passes + 1):
        dx, du, dx3, du3 = forward_sensitivity(
            problem, times, traj, policy, model, j, grid, settings.l_sign, extra
        )
        dq, dr, dqs = cost_coefficient_sensitivity(model, dx3, du3)
        dS, dsv, dsc = backward_sensitivity(
            model, report.riccati, settings.alpha, j, dq, dr, dqs, dx[-1], grid, solves
        )
        extra = _dl_triples(model, solves, dr, dsv, grid)
    return SensitivityBundle(j, dx, du, dS, dsv, dsc)


def gradient(
    problem: SwitchedProblem,
    times,
    slq_report: SlqReport,
    grid: NormalizedGrid,
    settings: Optional[GradientSettings] = None,
    switches=None,
) -> GradientResult:
    """``dJ/dt_j`` for every switching time (or the 1-based subset ``switches``).

    Meant for converged inner solutions; otherwise the result is still
    returned but ``inner_converged`` is False.
    """
    settings = settings or GradientSettings()
    times = check_times(times, problem.n_modes, problem.t_start, problem.t_end)
    if slq_report.model is None:
        raise ValueError("SLQ report carries no LQ model")
    js = list(range(1, problem.n_modes)) if switches is None else [int(j) for j in switches]
    solves = r_solves(slq_report.model)

    def work(j):
        return _one_switch(problem, times, slq_report, grid, j, settings, solves)

    if settings.threads > 1 and len(js) > 1:
        with ThreadPoolExecutor(max_workers=settings.threads) as pool:
            bundles = list(pool.map(work, js))
    else:
        bundles = [work(j) for j in js]
    return GradientResult(
        np.array([b.gradient for b in bundles]),
        bundles,
        inner_converged=bool(slq_report.converged),
        settings=settings,
    )


def _fd_steps(times, j, h, t_start, t_end):
    """Forward and backward step lengths for ``t_j`` that stay in the polytope."""
    chain = np.concatenate([[t_start], times, [t_end]])
    room_up = chain[j + 1] - chain[j]
    room_down = chain[j] - chain[j - 1]
    up = h if room_up >= h else 0.0
    down = h if room_down >= h else 0.0
    if up == 0.0 and down == 0.0:
        raise OracleError(f"no room to perturb t_{j} by {h} inside the polytope")
    return up, down


def fd_gradient_oracle(
    problem: SwitchedProblem,
    times,
    grid: NormalizedGrid,
    h: float = 1e-4,
    mode: str = "reconverged",
    policy: Optional[SlqPolicy] = None,
    slq_settings: Optional[SlqSettings] = None,
    operating_points=None,
) -> np.ndarray:
    """Finite-difference ``dJ/dt``.

    ``frozen-policy`` re-rolls ``policy`` at perturbed times. ``reconverged``
    re-solves the inner problem at every perturbed point (warm-started from
    ``policy`` when given, else from the initial controller built at
    ``operating_points``) and differences the converged costs. Central
    differences are used unless a bound of the polytope is within ``h``.
    """
    if h <= 0.0:
        raise ValueError("h must be positive")
    if mode not in ("frozen-policy", "reconverged"):
        raise ValueError(f"unknown oracle mode {mode!r}")
    times = check_times(times, problem.n_modes, problem.t_start, problem.t_end)
    if mode == "frozen-policy" and policy is None:
        raise ValueError("frozen-policy mode needs a policy")
    settings = slq_settings or SlqSettings(l_min=1e-7, max_iterations=200)
    if mode == "reconverged" and policy is None:
        from .rollout import initial_controller

        init = initial_controller(problem, times, grid, operating_points)
        base = slq_solve(problem, times, init, grid, settings)
        policy = base.final_policy

    def cost(t):
        try:
            if mode == "frozen-policy":
                return rollout(problem, t, policy, grid).cost
            rep = slq_solve(problem, t, policy, grid, settings)
        except (RolloutDiverged, RuntimeError) as exc:
            raise OracleError(f"inner evaluation failed at t = {np.asarray(t).tolist()}: {exc}") from exc
        if not rep.converged:
            raise OracleError(f"inner solve did not converge at t = {np.asarray(t).tolist()}")
        return rep.cost

    g = np.zeros(times.size)
    center = None
    for idx in range(times.size):
        up, down = _fd_steps(times, idx + 1, h, problem.t_start, problem.t_end)
        tp = times.copy()
        tm = times.copy()
        tp[idx] += up
        tm[idx] -= down
        if up and down:
            g[idx] = (cost(tp) - cost(tm)) / (up + down)
        else:
            if center is None:
                center = cost(times)
            g[idx] = (cost(tp) - center) / up if up else (center - cost(tm)) / down
    return g
