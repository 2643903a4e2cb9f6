"""Trajectory CSV, solve report files and flat ``key = value`` configs."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .problem import NormalizedGrid
from .rollout import Trajectory


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trajectory_csv(path, traj: Trajectory, grid: NormalizedGrid) -> None:
    """One row per grid node: ``z, t, x_1..x_n, u_1..u_m``.

    Inputs at switching nodes are the right limits (the value applied from
    that instant on).
    """
    nx = traj.x.shape[1]
    u = traj.u_nodes(grid)
    nu = u.shape[1]
    header = ["z", "t"] + [f"x{i + 1}" for i in range(nx)] + [f"u{i + 1}" for i in range(nu)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(traj.x.shape[0]):
            w.writerow([_fmt(traj.z[k]), _fmt(traj.t[k])] + [_fmt(v) for v in traj.x[k]] + [_fmt(v) for v in u[k]])


def read_trajectory_csv(path):
    """Return ``(header, data)`` with ``data`` as a float array of shape (rows, cols)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    return header, data


@dataclass
class SolveReportFile:
    """Summary of one ``solve`` run; serialized as ``key = value`` lines."""

    benchmark: str
    cost: float
    times: tuple
    outer_iterations: int
    function_calls: int
    inner_iterations: int
    converged: bool
    termination_reason: str
    gradient: tuple
    wall_time_ms: float
    settings: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [
            f"benchmark = {self.benchmark}",
            f"cost = {_fmt(self.cost)}",
            f"times = {', '.join(_fmt(t) for t in self.times)}",
            f"outer_iterations = {self.outer_iterations}",
            f"function_calls = {self.function_calls}",
            f"inner_iterations = {self.inner_iterations}",
            f"converged = {str(bool(self.converged)).lower()}",
            f"termination_reason = {self.termination_reason}",
            f"gradient = {', '.join(_fmt(g) for g in self.gradient)}",
            f"wall_time_ms = {self.wall_time_ms:.3f}",
        ]
        lines += [f"setting.{k} = {v}" for k, v in sorted(self.settings.items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SolveReportFile":
        kv = parse_key_values(text)

        def vec(s):
            return tuple(float(v) for v in s.split(",") if v.strip())

        return cls(
            benchmark=kv["benchmark"],
            cost=float(kv["cost"]),
            times=vec(kv["times"]),
            outer_iterations=int(kv["outer_iterations"]),
            function_calls=int(kv["function_calls"]),
            inner_iterations=int(kv["inner_iterations"]),
            converged=kv["converged"] == "true",
            termination_reason=kv["termination_reason"],
            gradient=vec(kv["gradient"]),
            wall_time_ms=float(kv["wall_time_ms"]),
            settings={k[len("setting."):]: v for k, v in kv.items() if k.startswith("setting.")},
        )

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path) -> "SolveReportFile":
        return cls.from_text(Path(path).read_text())


class ConfigError(ValueError):
    pass


def parse_key_values(text: str, source: Optional[str] = None) -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            where = f"{source}:{n}" if source else f"line {n}"
            raise ConfigError(f"{where}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_key_values(text, str(p))
