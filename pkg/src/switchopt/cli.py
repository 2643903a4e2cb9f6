"""Command-line entry points: solve, grad-check, scaling, list-benchmarks.

Exit codes: 0 success/converged, 1 usage error, 2 solver did not converge
(or a gradient check failed).
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from .benchmarks import BenchmarkDefinition, UnknownBenchmark, available, builtin
from .gradient import GradientSettings, OracleError, fd_gradient_oracle, gradient
from .outer import OuterError, OuterSettings, ocs2_solve
from .problem import NormalizedGrid, ProblemError, check_times
from .reporting import ConfigError, SolveReportFile, load_config, write_trajectory_csv
from .rollout import InitializationError, initial_controller
from .slq import SlqError, SlqSettings, slq_solve

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2

# key -> (parser, default); the same keys are accepted in config files
SETTINGS = {
    "benchmark": (str, None),
    "initial_times": (lambda s: tuple(float(v) for v in s.split(",") if v.strip()), None),
    "nodes_per_mode": (int, 200),
    "l_min": (float, 1e-3),
    "max_iterations": (int, 50),
    "max_outer": (int, 30),
    "gap_tol": (float, 1e-3),
    "step_tol": (float, 1e-4),
    "gamma_schedule": (lambda s: tuple(float(v) for v in s.split(",")), (1.0, 0.5, 0.25, 0.125, 0.0625)),
    "variant": (str, "pairwise"),
    "warm_start": (lambda s: s.strip().lower() in ("1", "true", "yes", "on"), True),
    "h": (float, 1e-4),
    "tol": (float, 1e-2),
    "threads": (int, 1),
    "output_dir": (str, "."),
    "repeats": (int, 1),
    "scaling_nodes": (lambda s: tuple(int(v) for v in s.split(",")), (100, 200, 400)),
}


class UsageError(Exception):
    pass


def resolve_settings(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    out = {k: d for k, (_, d) in SETTINGS.items()}
    if getattr(args, "config", None):
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            raise UsageError(str(exc)) from exc
        for k, v in cfg.items():
            key = k.replace("-", "_")
            if key not in SETTINGS:
                raise UsageError(f"unknown config key {k!r}")
            try:
                out[key] = SETTINGS[key][0](v)
            except ValueError as exc:
                raise UsageError(f"bad value for {k}: {v!r}") from exc
    for key in SETTINGS:
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    if out["benchmark"] is None:
        raise UsageError("no benchmark given (use --benchmark or a config file)")
    if out["nodes_per_mode"] < 1 or min(out["scaling_nodes"]) < 1:
        raise UsageError("nodes-per-mode must be positive")
    if out["variant"] not in ("classic", "away", "pairwise"):
        raise UsageError(f"unknown variant {out['variant']!r}")
    return out


def _load(settings: dict) -> BenchmarkDefinition:
    try:
        return builtin(settings["benchmark"])
    except UnknownBenchmark as exc:
        raise UsageError(str(exc)) from exc


def _times(defn: BenchmarkDefinition, settings: dict) -> np.ndarray:
    t = settings["initial_times"]
    if t is None:
        return np.asarray(defn.initial_times, dtype=float)
    p = defn.problem
    try:
        return check_times(t, p.n_modes, p.t_start, p.t_end)
    except ProblemError as exc:
        raise UsageError(str(exc)) from exc


def outer_settings(s: dict) -> OuterSettings:
    return OuterSettings(
        gap_tol=s["gap_tol"],
        step_tol=s["step_tol"],
        max_outer_iterations=s["max_outer"],
        gamma_schedule=tuple(s["gamma_schedule"]),
        variant=s["variant"],
        warm_start=s["warm_start"],
        slq=SlqSettings(l_min=s["l_min"], max_iterations=s["max_iterations"]),
        gradient=GradientSettings(threads=s["threads"]),
    )


def _echo(s: dict) -> dict:
    skip = ("benchmark", "output_dir", "repeats", "scaling_nodes", "h", "tol")
    out = {}
    for k, v in s.items():
        if k in skip or v is None:
            continue
        out[k] = ", ".join(str(x) for x in v) if isinstance(v, tuple) else str(v).lower() if isinstance(v, bool) else str(v)
    return out


def cmd_solve(s: dict, out=None) -> int:
    out = out or sys.stdout
    defn = _load(s)
    times = _times(defn, s)
    p = defn.problem
    grid = NormalizedGrid.for_problem(p, s["nodes_per_mode"])
    try:
        rep = ocs2_solve(p, times, grid, outer_settings(s), defn.operating_points)
    except OuterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    outdir = Path(s["output_dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(outdir / "trajectory.csv", rep.final_report.final_trajectory, grid)
    g = rep.final_gradient if rep.final_gradient is not None else np.zeros(0)
    report = SolveReportFile(
        benchmark=defn.name,
        cost=rep.optimal_cost,
        times=tuple(float(t) for t in rep.optimal_times),
        outer_iterations=rep.outer_iterations,
        function_calls=rep.function_calls,
        inner_iterations=rep.inner_iterations,
        converged=rep.converged,
        termination_reason=rep.termination_reason,
        gradient=tuple(float(v) for v in g),
        wall_time_ms=1000.0 * rep.wall_time,
        settings=_echo(s),
    )
    report.write(outdir / "report.txt")
    print(
        f"{defn.name}: J = {rep.optimal_cost:.6f}, times = {np.array2string(rep.optimal_times, precision=4)}, "
        f"outer iterations = {rep.outer_iterations}, FC = {rep.function_calls}, "
        f"{rep.termination_reason}, {rep.wall_time:.1f} s",
        file=out,
    )
    if not rep.converged:
        print("warning: outer loop did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def component_error(analytic: float, reference: float) -> float:
    """Relative error with the denominator floored at 1e-2 (absolute floor for near-zero entries)."""
    return abs(analytic - reference) / max(abs(reference), 1e-2)


def grad_check(defn: BenchmarkDefinition, times, grid: NormalizedGrid, h: float = 1e-4, threads: int = 1,
               slq_settings: Optional[SlqSettings] = None):
    """Analytic gradient and reconverged finite differences at ``times``.

    Returns rows ``(j, analytic, oracle, error)``.
    """
    p = defn.problem
    slq_settings = slq_settings or SlqSettings()
    init = initial_controller(p, times, grid, defn.operating_points)
    rep = slq_solve(p, times, init, grid, slq_settings)
    if not rep.converged:
        raise SlqError(f"inner solve did not converge ({rep.termination_reason.value})", rep.iterations)
    ga = gradient(p, times, rep, grid, GradientSettings(threads=threads)).gradient
    go = fd_gradient_oracle(p, times, grid, h, "reconverged", rep.final_policy)
    return [(j + 1, float(ga[j]), float(go[j]), component_error(ga[j], go[j])) for j in range(ga.size)]


def cmd_grad_check(s: dict, out=None, defn: Optional[BenchmarkDefinition] = None) -> int:
    out = out or sys.stdout
    defn = defn or _load(s)
    times = _times(defn, s)
    grid = NormalizedGrid.for_problem(defn.problem, s["nodes_per_mode"])
    try:
        rows = grad_check(defn, times, grid, s["h"], s["threads"],
                          SlqSettings(l_min=s["l_min"], max_iterations=s["max_iterations"]))
    except (SlqError, InitializationError, OracleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    print(f"{'j':>3} {'analytic':>14} {'oracle':>14} {'rel. error':>11}  ok", file=out)
    ok = True
    for j, a, o, e in rows:
        good = e <= s["tol"]
        ok &= good
        print(f"{j:>3} {a:>14.8f} {o:>14.8f} {e:>11.3e}  {'yes' if good else 'NO'}", file=out)
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def scaling_table(defn: BenchmarkDefinition, times, nodes, repeats: int = 1, slq_settings=None):
    """Wall time of one inner solve per grid size; rows ``(N, iterations, ms)``."""
    p = defn.problem
    rows = []
    for N in nodes:
        grid = NormalizedGrid.for_problem(p, N)
        best = np.inf
        its = 0
        for _ in range(max(1, repeats)):
            t0 = time.monotonic()
            init = initial_controller(p, times, grid, defn.operating_points)
            rep = slq_solve(p, times, init, grid, slq_settings)
            best = min(best, time.monotonic() - t0)
            its = rep.iterations
        rows.append((N, its, 1000.0 * best))
    return rows


def cmd_scaling(s: dict, out=None) -> int:
    out = out or sys.stdout
    defn = _load(s)
    times = _times(defn, s)
    try:
        rows = scaling_table(defn, times, s["scaling_nodes"], s["repeats"],
                             SlqSettings(l_min=s["l_min"], max_iterations=s["max_iterations"]))
    except (SlqError, InitializationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    print(f"{'N':>6} {'iterations':>10} {'wall ms':>10} {'ratio':>7}", file=out)
    prev = None
    for N, its, ms in rows:
        ratio = f"{ms / prev:7.2f}" if prev else f"{'-':>7}"
        print(f"{N:>6} {its:>10} {ms:>10.1f} {ratio}", file=out)
        prev = ms
    return EXIT_OK


def cmd_list(out=None) -> int:
    out = out or sys.stdout
    for name in available():
        print(f"{name}: {builtin(name).description}", file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="switchopt", description="Switching-time optimal control benchmarks")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, node_list=False):
        p.add_argument("--benchmark")
        p.add_argument("--config")
        p.add_argument("--initial-times", dest="initial_times", type=SETTINGS["initial_times"][0])
        if node_list:
            p.add_argument("--nodes-per-mode", dest="scaling_nodes", type=SETTINGS["scaling_nodes"][0],
                           help="comma-separated values (default 100,200,400)")
        else:
            p.add_argument("--nodes-per-mode", dest="nodes_per_mode", type=int)
        p.add_argument("--l-min", dest="l_min", type=float)
        p.add_argument("--max-iterations", dest="max_iterations", type=int)
        p.add_argument("--threads", type=int)

    ps = sub.add_parser("solve", help="run the two-stage optimizer on a benchmark")
    common(ps)
    ps.add_argument("--max-outer", dest="max_outer", type=int)
    ps.add_argument("--gap-tol", dest="gap_tol", type=float)
    ps.add_argument("--output-dir", dest="output_dir")

    pg = sub.add_parser("grad-check", help="compare the analytic gradient with finite differences")
    common(pg)
    pg.add_argument("--h", type=float)
    pg.add_argument("--tol", type=float)

    pc = sub.add_parser("scaling", help="time single inner solves for several grid sizes")
    common(pc, node_list=True)
    pc.add_argument("--repeats", type=int)

    sub.add_parser("list-benchmarks", help="list builtin problems")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.command == "list-benchmarks":
        return cmd_list()
    try:
        s = resolve_settings(args)
        handler = {"solve": cmd_solve, "grad-check": cmd_grad_check, "scaling": cmd_scaling}[args.command]
        return handler(s)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
