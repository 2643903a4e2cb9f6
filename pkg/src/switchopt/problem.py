"""Switched optimal-control problem definition and the normalized-time map.

A problem has a fixed sequence of ``I`` subsystems. Mode ``i`` (1-based) is
active on ``[t_{i-1}, t_i)`` in physical time and on ``[i-1, i)`` in the
normalized time ``z``. The switching times ``t_1..t_{I-1}`` are free
parameters restricted to the order polytope between ``t_start`` and
``t_end``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

FD_REL_STEP = 1e-6
FD_HESS_REL_STEP = 1e-4


class ProblemError(ValueError):
    """Raised for malformed problems or switching times."""


def _fd_step(v: np.ndarray, rel: float) -> np.ndarray:
    return rel * (1.0 + np.abs(v))


def fd_jacobian(fun: Callable, x: np.ndarray, rel: float = FD_REL_STEP) -> np.ndarray:
    """Central finite-difference Jacobian of a vector function."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(fun(x), dtype=float))
    jac = np.empty((f0.size, x.size))
    steps = _fd_step(x, rel)
    for k in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[k] += steps[k]
        xm[k] -= steps[k]
        jac[:, k] = (np.atleast_1d(fun(xp)) - np.atleast_1d(fun(xm))) / (2.0 * steps[k])
    return jac


def fd_gradient(fun: Callable, x: np.ndarray, rel: float = FD_REL_STEP) -> np.ndarray:
    return fd_jacobian(lambda y: np.array([fun(y)]), x, rel)[0]


def fd_hessian(fun: Callable, x: np.ndarray, rel: float = FD_HESS_REL_STEP) -> np.ndarray:
    """Central second differences of a scalar function, symmetrized."""
    x = np.asarray(x, dtype=float)
    n = x.size
    steps = _fd_step(x, rel)
    hess = np.empty((n, n))
    f0 = fun(x)
    for a in range(n):
        for b in range(a, n):
            if a == b:
                xp = x.copy()
                xm = x.copy()
                xp[a] += steps[a]
                xm[a] -= steps[a]
                hess[a, a] = (fun(xp) - 2.0 * f0 + fun(xm)) / steps[a] ** 2
            else:
                vals = []
                for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    y = x.copy()
                    y[a] += sa * steps[a]
                    y[b] += sb * steps[b]
                    vals.append(fun(y))
                hess[a, b] = hess[b, a] = (vals[0] - vals[1] - vals[2] + vals[3]) / (
                    4.0 * steps[a] * steps[b]
                )
    return hess


@dataclass(frozen=True)
class SubsystemModel:
    """One mode of the switched system.

    ``dynamics(x, u)`` returns the state derivative and ``running_cost(x, u)``
    the cost rate. The derivative callbacks are optional; missing ones are
    replaced by central finite differences.

    ``running_cost_quadratics(x, u)`` must return ``(q, qv, rv, Q, P, R)``:
    the cost value, its state and input gradients, the state Hessian, the
    state/input cross block (n_x by n_u) and the input Hessian.
    """

    dynamics: Callable[[np.ndarray, np.ndarray], np.ndarray]
    running_cost: Callable[[np.ndarray, np.ndarray], float]
    jacobian_state: Optional[Callable] = None
    jacobian_input: Optional[Callable] = None
    running_cost_quadratics: Optional[Callable] = None
    name: str = ""

    def flow(self, x, u) -> np.ndarray:
        return np.asarray(self.dynamics(x, u), dtype=float)

    def jacobians(self, x, u) -> tuple[np.ndarray, np.ndarray]:
        if self.jacobian_state is not None:
            A = np.asarray(self.jacobian_state(x, u), dtype=float)
        else:
            A = fd_jacobian(lambda y: self.dynamics(y, u), x)
        if self.jacobian_input is not None:
            B = np.asarray(self.jacobian_input(x, u), dtype=float)
        else:
            B = fd_jacobian(lambda v: self.dynamics(x, v), u)
        return A, B

    def cost_expansion(self, x, u):
        """Second-order Taylor coefficients ``(q, qv, rv, Q, P, R)`` at (x, u)."""
        if self.running_cost_quadratics is not None:
            q, qv, rv, Q, P, R = self.running_cost_quadratics(x, u)
            return (
                float(q),
                np.asarray(qv, dtype=float),
                np.asarray(rv, dtype=float),
                np.asarray(Q, dtype=float),
                np.asarray(P, dtype=float),
                np.asarray(R, dtype=float),
            )
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        nx = x.size
        xu = np.concatenate([x, u])

        def joint(y):
            return float(self.running_cost(y[:nx], y[nx:]))

        grad = fd_gradient(joint, xu)
        hess = fd_hessian(joint, xu)
        return (
            joint(xu),
            grad[:nx],
            grad[nx:],
            hess[:nx, :nx],
            hess[:nx, nx:],
            hess[nx:, nx:],
        )


@dataclass(frozen=True)
class TerminalCost:
    """Final cost with optional analytic gradient and Hessian."""

    value: Callable[[np.ndarray], float]
    gradient: Optional[Callable] = None
    hessian: Optional[Callable] = None

    def __call__(self, x) -> float:
        return float(self.value(x))

    def expansion(self, x) -> tuple[float, np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        g = (
            np.asarray(self.gradient(x), dtype=float)
            if self.gradient is not None
            else fd_gradient(self.value, x)
        )
        H = (
            np.asarray(self.hessian(x), dtype=float)
            if self.hessian is not None
            else fd_hessian(self.value, x)
        )
        return float(self.value(x)), g, 0.5 * (H + H.T)


@dataclass(frozen=True)
class SwitchedProblem:
    subsystems: tuple
    terminal_cost: TerminalCost
    t_start: float
    t_end: float
    x0: np.ndarray
    n_u: int
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "subsystems", tuple(self.subsystems))
        x0 = np.array(self.x0, dtype=float).reshape(-1)
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        if len(self.subsystems) < 1:
            raise ProblemError("a switched problem needs at least one subsystem")
        if not self.t_start < self.t_end:
            raise ProblemError(f"t_start={self.t_start} must precede t_end={self.t_end}")
        if self.n_u < 1:
            raise ProblemError("n_u must be positive")

    @property
    def n_modes(self) -> int:
        return len(self.subsystems)

    @property
    def n_x(self) -> int:
        return self.x0.size

    @property
    def horizon(self) -> float:
        return self.t_end - self.t_start

    def uniform_times(self) -> np.ndarray:
        """Switching times that split the horizon into equal mode durations."""
        I = self.n_modes
        return self.t_start + self.horizon * np.arange(1, I) / I


@dataclass(frozen=True)
class NormalizedGrid:
    """Uniform grid over normalized time ``[0, I]`` with ``N`` steps per mode."""

    n_modes: int
    nodes_per_mode: int = 200
    z_nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_modes < 1 or self.nodes_per_mode < 1:
            raise ProblemError("grid needs n_modes >= 1 and nodes_per_mode >= 1")
        N = self.nodes_per_mode
        z = np.concatenate(
            [i + np.arange(N) / N for i in range(self.n_modes)] + [np.array([float(self.n_modes)])]
        )
        z.setflags(write=False)
        object.__setattr__(self, "z_nodes", z)

    @classmethod
    def for_problem(cls, problem: SwitchedProblem, nodes_per_mode: int = 200) -> "NormalizedGrid":
        return cls(problem.n_modes, nodes_per_mode)

    @property
    def n_steps(self) -> int:
        return self.n_modes * self.nodes_per_mode

    @property
    def dz(self) -> float:
        return 1.0 / self.nodes_per_mode

    @property
    def step_modes(self) -> np.ndarray:
        """0-based mode index of every integration step."""
        return np.repeat(np.arange(self.n_modes), self.nodes_per_mode)

    @property
    def node_modes(self) -> np.ndarray:
        """0-based mode of each node; integer nodes belong to the mode they start."""
        return np.append(self.step_modes, self.n_modes - 1)

    def z_mid(self) -> np.ndarray:
        return 0.5 * (self.z_nodes[:-1] + self.z_nodes[1:])

    # Mode-local nodes: every mode owns N+1 nodes, so a switching node appears
    # twice (end of mode i, start of mode i+1). Inputs and gains may jump there.
    @property
    def n_local(self) -> int:
        return self.n_steps + self.n_modes

    @property
    def local_to_node(self) -> np.ndarray:
        N = self.nodes_per_mode
        return np.concatenate([i * N + np.arange(N + 1) for i in range(self.n_modes)])

    @property
    def node_to_local(self) -> np.ndarray:
        """Local index of each node, taking the right limit at switching nodes."""
        k = np.arange(self.n_steps + 1)
        return np.minimum(k + k // self.nodes_per_mode, self.n_local - 1)

    @property
    def step_start_local(self) -> np.ndarray:
        k = np.arange(self.n_steps)
        return k + k // self.nodes_per_mode

    @property
    def local_modes(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_modes), self.nodes_per_mode + 1)


def check_times(times, n_modes: int, t_start: float, t_end: float, tol: float = 0.0) -> np.ndarray:
    """Return ``times`` as an array after checking membership in the order polytope."""
    t = np.asarray(times, dtype=float).reshape(-1)
    if t.size != n_modes - 1:
        raise ProblemError(f"expected {n_modes - 1} switching times, got {t.size}")
    if not np.all(np.isfinite(t)):
        raise ProblemError("switching times must be finite")
    chain = np.concatenate([[t_start], t, [t_end]])
    if np.any(np.diff(chain) < -tol):
        raise ProblemError(f"switching times {t.tolist()} violate t_start <= t_1 <= ... <= t_end")
    return t


def in_polytope(times, t_start: float, t_end: float, tol: float = 0.0) -> bool:
    chain = np.concatenate([[t_start], np.asarray(times, dtype=float).reshape(-1), [t_end]])
    return bool(np.all(np.diff(chain) >= -tol))


def mode_durations(times, t_start: float, t_end: float) -> np.ndarray:
    """Physical duration of each mode; zero-length modes are allowed."""
    t = np.asarray(times, dtype=float).reshape(-1)
    check_times(t, t.size + 1, t_start, t_end)
    return np.diff(np.concatenate([[t_start], t, [t_end]]))


def map_z_to_t(z, times, t_start: float, t_end: float):
    """Physical time of normalized time ``z`` (scalar or array).

    Mode ``i`` maps ``[i-1, i]`` affinely onto ``[t_{i-1}, t_i]``.
    """
    t = np.asarray(times, dtype=float).reshape(-1)
    I = t.size + 1
    check_times(t, I, t_start, t_end)
    zz = np.asarray(z, dtype=float)
    if np.any(zz < 0.0) or np.any(zz > I) or not np.all(np.isfinite(zz)):
        raise ProblemError(f"normalized time outside [0, {I}]")
    chain = np.concatenate([[t_start], t, [t_end]])
    # mode i (1-based) covers [i-1, i); z == I stays in the last mode
    i = np.minimum(np.floor(zz).astype(int) + 1, I)
    out = (chain[i] - chain[i - 1]) * (zz - i) + chain[i]
    return float(out) if out.ndim == 0 else out


def vertex_weights(times, t_start: float, t_end: float) -> np.ndarray:
    """Barycentric weights of ``times`` over ``polytope_vertices`` (unique: the polytope is a simplex)."""
    u = (np.asarray(times, dtype=float).reshape(-1) - t_start) / (t_end - t_start)
    lam = np.diff(np.concatenate([[0.0], u, [1.0]]))
    return np.clip(lam, 0.0, None)


def from_vertex_weights(weights, t_start: float, t_end: float) -> np.ndarray:
    """Inverse of :func:`vertex_weights`; the cumulative sum keeps the ordering exact."""
    w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
    u = np.cumsum(w[:-1]) / w.sum()
    return np.clip(t_start + (t_end - t_start) * u, t_start, t_end)


def polytope_vertices(n_modes: int, t_start: float, t_end: float) -> list[np.ndarray]:
    """Extreme points of the order polytope.

    Vertex ``k`` has its first ``k`` coordinates at ``t_start`` and the rest
    at ``t_end``.
    """
    if n_modes < 1:
        raise ProblemError("n_modes must be >= 1")
    d = n_modes - 1
    return [
        np.concatenate([np.full(k, float(t_start)), np.full(d - k, float(t_end))])
        for k in range(n_modes)
    ]


@dataclass
class Diagnostics:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __str__(self) -> str:
        lines = [f"error: {e}" for e in self.errors] + [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines) if lines else "ok"


def validate_problem(
    problem: SwitchedProblem,
    n_samples: int = 5,
    jac_tol: float = 1e-5,
    seed: int = 0,
    scale: float = 1.0,
) -> Diagnostics:
    """Audit dimensions, Jacobians and cost curvature at random points.

    Never raises on a bad problem; every finding is collected in the report.
    Sample points are ``x0`` and ``0`` perturbed by normal noise of ``scale``.
    """
    diag = Diagnostics()
    rng = np.random.default_rng(seed)
    nx, nu = problem.n_x, problem.n_u
    points = [(problem.x0.copy(), np.zeros(nu))]
    for _ in range(n_samples):
        points.append(
            (problem.x0 + scale * rng.standard_normal(nx), scale * rng.standard_normal(nu))
        )
    for idx, sub in enumerate(problem.subsystems, start=1):
        label = sub.name or f"mode {idx}"
        for x, u in points:
            try:
                f = sub.flow(x, u)
                if f.shape != (nx,):
                    diag.errors.append(f"{label}: dynamics returns shape {f.shape}, expected ({nx},)")
                    break
                A, B = sub.jacobians(x, u)
                if A.shape != (nx, nx) or B.shape != (nx, nu):
                    diag.errors.append(
                        f"{label}: Jacobian shapes {A.shape}, {B.shape}; expected ({nx},{nx}), ({nx},{nu})"
                    )
                    break
                if sub.jacobian_state is not None or sub.jacobian_input is not None:
                    A_fd = fd_jacobian(lambda y: sub.dynamics(y, u), x)
                    B_fd = fd_jacobian(lambda v: sub.dynamics(x, v), u)
                    for nm, an, fd in (("state", A, A_fd), ("input", B, B_fd)):
                        err = np.max(np.abs(an - fd)) / max(1.0, np.max(np.abs(fd)))
                        if err > jac_tol:
                            diag.errors.append(
                                f"{label}: {nm} Jacobian mismatch vs finite differences "
                                f"(rel err {err:.2e}) at x={np.round(x, 4).tolist()}"
                            )
                q, qv, rv, Q, P, R = sub.cost_expansion(x, u)
                if qv.shape != (nx,) or rv.shape != (nu,) or Q.shape != (nx, nx) or P.shape != (nx, nu) or R.shape != (nu, nu):
                    diag.errors.append(f"{label}: cost quadratic shapes are inconsistent")
                    break
                if not np.allclose(Q, Q.T, atol=1e-9):
                    diag.errors.append(f"{label}: Q not symmetric")
                Rs = 0.5 * (R + R.T)
                if not np.allclose(R, R.T, atol=1e-9):
                    diag.errors.append(f"{label}: R not symmetric")
                try:
                    np.linalg.cholesky(Rs)
                except np.linalg.LinAlgError:
                    diag.errors.append(f"{label}: R not positive definite at x={np.round(x, 4).tolist()}")
            except (ValueError, TypeError, IndexError) as exc:
                diag.errors.append(f"{label}: evaluation failed: {exc}")
                break
    try:
        phi, g, H = problem.terminal_cost.expansion(problem.x0)
        if g.shape != (nx,) or H.shape != (nx, nx):
            diag.errors.append("terminal cost: gradient/Hessian shapes are inconsistent")
        elif np.min(np.linalg.eigvalsh(H)) < -1e-9:
            diag.errors.append("terminal cost: Q_f not positive semidefinite")
    except (ValueError, TypeError, IndexError) as exc:
        diag.errors.append(f"terminal cost: evaluation failed: {exc}")
    # dedupe repeated findings from several sample points
    diag.errors = list(dict.fromkeys(diag.errors))
    return diag


def repeat_mode(problem: SwitchedProblem, mode: int) -> SwitchedProblem:
    """Copy of ``problem`` with subsystem ``mode`` (0-based) duplicated in place."""
    subs = list(problem.subsystems)
    subs.insert(mode + 1, subs[mode])
    return SwitchedProblem(
        subs, problem.terminal_cost, problem.t_start, problem.t_end, problem.x0, problem.n_u, problem.name
    )


def as_times(values: Sequence[float]) -> np.ndarray:
    return np.asarray(list(values), dtype=float)
