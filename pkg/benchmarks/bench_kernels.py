"""Time the compiled sweeps against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--benchmark ex1] [--nodes 100,200,400] [--repeats 3] [--end-to-end]

Kernel timings use the same LQ model for both backends and also report the
largest deviation between their outputs. ``--end-to-end`` additionally runs
one inner solve per backend in a subprocess (the backend is fixed at import).
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

import switchopt.gradient as G
from switchopt import kernels
from switchopt.benchmarks import builtin
from switchopt.lq import linearize
from switchopt.problem import NormalizedGrid
from switchopt.rollout import initial_controller, rollout
from switchopt.slq import r_solves


def kernel_inputs(name: str, N: int, seed: int = 0):
    defn = builtin(name)
    p = defn.problem
    grid = NormalizedGrid.for_problem(p, N)
    times = np.asarray(defn.initial_times, dtype=float)
    pol = initial_controller(p, times, grid, defn.operating_points)
    model = linearize(p, times, rollout(p, times, pol, grid), grid)
    solves = r_solves(model)
    rng = np.random.default_rng(seed)
    ric = (model.A, model.B, model.Q, model.R, model.qv, model.q, *solves,
           model.step_dur, grid.dz, N, model.Qf, model.qvf)
    ind = G._step_indicator(grid, 1)
    fwd = (model.A, model.B, model.f, G._gain_triples(pol, grid),
           np.zeros((grid.n_steps, 3, p.n_u)), model.step_dur, ind, grid.dz, 1.0)
    bwd = (model.A, model.B, model.Q, model.R, model.qv, model.q, *solves, model.step_dur, ind, grid.dz, 1.0,
           rng.normal(size=model.qv.shape), rng.normal(size=model.rv.shape), rng.normal(size=model.q.shape),
           model.Qf, model.qvf, rng.normal(size=p.n_x), 0.0)
    return {"riccati_sweep": ric, "sens_forward_sweep": fwd, "sens_backward_sweep": bwd}


def best_of(fn, args, repeats):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def max_dev(a, b):
    dev = 0.0
    for x, y in zip(a, b):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if x.shape:
            dev = max(dev, float(np.max(np.abs(x - y) / (1.0 + np.abs(x)))))
    return dev


_E2E = """
import time, numpy as np
from switchopt import kernels
from switchopt.benchmarks import builtin
from switchopt.problem import NormalizedGrid
from switchopt.rollout import initial_controller
from switchopt.slq import slq_solve
d = builtin({name!r}); p = d.problem; g = NormalizedGrid.for_problem(p, {N})
t = np.asarray(d.initial_times, float)
t0 = time.perf_counter()
r = slq_solve(p, t, initial_controller(p, t, g, d.operating_points), g)
print(kernels.BACKEND, time.perf_counter() - t0, r.cost, r.iterations)
"""


def end_to_end(name, N, pure):
    env = dict(os.environ)
    env["SWITCHOPT_PURE_PYTHON"] = "1" if pure else "0"
    res = subprocess.run([sys.executable, "-c", _E2E.format(name=name, N=N)], env=env,
                         capture_output=True, text=True, check=True)
    be, secs, cost, its = res.stdout.split()
    return be, float(secs), float(cost), int(its)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--benchmark", default="ex1")
    ap.add_argument("--nodes", default="100,200,400")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args(argv)
    try:
        cy = kernels.backend("cython")
    except ImportError:
        print("compiled kernels not built; nothing to compare", file=sys.stderr)
        return 1
    py = kernels.backend("python")
    print(f"{'kernel':<20} {'N':>5} {'python ms':>10} {'cython ms':>10} {'speedup':>8} {'max dev':>9}")
    for N in (int(v) for v in args.nodes.split(",")):
        for kname, kargs in kernel_inputs(args.benchmark, N).items():
            tp, op = best_of(getattr(py, kname), kargs, args.repeats)
            tc, oc = best_of(getattr(cy, kname), kargs, args.repeats)
            print(f"{kname:<20} {N:>5} {1e3 * tp:>10.2f} {1e3 * tc:>10.3f} {tp / tc:>8.1f} {max_dev(op, oc):>9.1e}")
    if args.end_to_end:
        N = int(args.nodes.split(",")[-1])
        print(f"\ninner solve, {args.benchmark}, N={N}")
        for pure in (True, False):
            be, secs, cost, its = end_to_end(args.benchmark, N, pure)
            print(f"  {be:<7} {secs:8.2f} s  J = {cost:.10f}  iterations = {its}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
