"""Time-varying LQ approximation along a nominal trajectory.

Coefficients are stored per integration step as triples
``[start, midpoint, end]`` (axis 1). Each triple is evaluated with the
subsystem that is active on that step, so the end sample of the last step of
a mode is the left limit at the switch while the start sample of the next
step is the right limit. This is what fixed-step RK4 needs in the backward
sweeps.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import NormalizedGrid, SwitchedProblem, mode_durations
from .rollout import Trajectory

R_MIN_EIG = 1e-6
R_MAX_SHIFT = 1e6


class ModelError(RuntimeError):
    pass


@dataclass
class LqModel:
    A: np.ndarray  # (M, 3, nx, nx)
    B: np.ndarray  # (M, 3, nx, nu)
    f: np.ndarray  # (M, 3, nx) vector field at the nominal
    q: np.ndarray  # (M, 3)
    qv: np.ndarray  # (M, 3, nx)
    rv: np.ndarray  # (M, 3, nu)
    Q: np.ndarray  # (M, 3, nx, nx)
    P: np.ndarray  # (M, 3, nx, nu)
    R: np.ndarray  # (M, 3, nu, nu)
    qf: float
    qvf: np.ndarray
    Qf: np.ndarray
    durations: np.ndarray  # (I,)
    step_dur: np.ndarray  # (M,)

    @property
    def n_steps(self) -> int:
        return self.A.shape[0]

    def node_view(self, name: str) -> np.ndarray:
        """Per-node values using the start-of-step convention (last node: left limit)."""
        arr = getattr(self, name)
        return np.concatenate([arr[:, 0], arr[-1:, 2]], axis=0)


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def regularize_R(R: np.ndarray) -> np.ndarray:
    """Shift every ``R`` block so its smallest eigenvalue is at least ``R_MIN_EIG``."""
    R = _sym(R)
    if not np.all(np.isfinite(R)):
        raise ModelError("non-finite input Hessian R")
    lam = np.linalg.eigvalsh(R)[..., 0]
    shift = np.where(lam < R_MIN_EIG, R_MIN_EIG - lam, 0.0)
    if np.any(shift > R_MAX_SHIFT):
        raise ModelError(
            f"R is not positive definite (min eigenvalue {lam.min():.3e}) beyond the regularization cap"
        )
    if np.any(shift > 0.0):
        nu = R.shape[-1]
        R = R + shift[..., None, None] * np.eye(nu)
    return R


def _alloc(M, nx, nu):
    return dict(
        A=np.empty((M, 3, nx, nx)),
        B=np.empty((M, 3, nx, nu)),
        f=np.empty((M, 3, nx)),
        q=np.empty((M, 3)),
        qv=np.empty((M, 3, nx)),
        rv=np.empty((M, 3, nu)),
        Q=np.empty((M, 3, nx, nx)),
        P=np.empty((M, 3, nx, nu)),
        R=np.empty((M, 3, nu, nu)),
    )


def _fill(buf, k, s, sub, x, u):
    f = sub.flow(x, u)
    A, B = sub.jacobians(x, u)
    q, qv, rv, Q, P, R = sub.cost_expansion(x, u)
    buf["f"][k, s] = f
    buf["A"][k, s] = A
    buf["B"][k, s] = B
    buf["q"][k, s] = q
    buf["qv"][k, s] = qv
    buf["rv"][k, s] = rv
    buf["Q"][k, s] = Q
    buf["P"][k, s] = P
    buf["R"][k, s] = R


def _finish(buf, problem, x_final, durs, grid) -> LqModel:
    qf, qvf, Qf = problem.terminal_cost.expansion(x_final)
    buf["Q"] = _sym(buf["Q"])
    buf["R"] = regularize_R(buf["R"])
    step_dur = durs[grid.step_modes]
    return LqModel(qf=qf, qvf=qvf, Qf=_sym(Qf), durations=durs, step_dur=step_dur, **buf)


def linearize(problem: SwitchedProblem, times, nominal: Trajectory, grid: NormalizedGrid) -> LqModel:
    """Linearize dynamics and quadratize costs at every node and step midpoint."""
    durs = mode_durations(times, problem.t_start, problem.t_end)
    N = grid.nodes_per_mode
    M = grid.n_steps
    if nominal.x.shape[0] != M + 1:
        raise ValueError("nominal trajectory does not match the grid")
    buf = _alloc(M, problem.n_x, problem.n_u)
    xs, us = nominal.x, nominal.u
    for i, sub in enumerate(problem.subsystems):
        k0 = i * N
        for k in range(k0, k0 + N):
            j = k + i
            if k == k0:
                _fill(buf, k, 0, sub, xs[k], us[j])
            else:
                # shared node inside the mode: reuse the previous step's end sample
                for name in buf:
                    buf[name][k, 0] = buf[name][k - 1, 2]
            _fill(buf, k, 1, sub, nominal.x_mid[k], nominal.u_mid[k])
            _fill(buf, k, 2, sub, xs[k + 1], us[j + 1])
    return _finish(buf, problem, nominal.x[-1], durs, grid)


def constant_model(problem: SwitchedProblem, times, grid: NormalizedGrid, operating_points) -> LqModel:
    """Piecewise-constant LQ model with mode ``i`` expanded at ``operating_points[i]``."""
    durs = mode_durations(times, problem.t_start, problem.t_end)
    N = grid.nodes_per_mode
    buf = _alloc(grid.n_steps, problem.n_x, problem.n_u)
    for i, (sub, (x, u)) in enumerate(zip(problem.subsystems, operating_points)):
        _fill(buf, i * N, 0, sub, x, u)
        for name in buf:
            buf[name][i * N : (i + 1) * N] = buf[name][i * N, 0]
    return _finish(buf, problem, operating_points[-1][0], durs, grid)
