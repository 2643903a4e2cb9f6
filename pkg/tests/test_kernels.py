import importlib.util
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from switchopt import kernels

ROOT = Path(__file__).resolve().parents[1]


def _bench_module():
    spec = importlib.util.spec_from_file_location("bench_kernels", ROOT / "benchmarks" / "bench_kernels.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


needs_compiled = pytest.mark.skipif(kernels._compiled is None, reason="compiled kernels not built")


@needs_compiled
@pytest.mark.parametrize("name", ["ex1", "ex2"])
@pytest.mark.parametrize("kernel", ["riccati_sweep", "sens_forward_sweep", "sens_backward_sweep"])
def test_backends_agree(name, kernel):
    inputs = _bench_module().kernel_inputs(name, 60)[kernel]
    a = getattr(kernels.backend("python"), kernel)(*inputs)
    b = getattr(kernels.backend("cython"), kernel)(*inputs)
    assert len(a) == len(b)
    for x, y in zip(a, b):
        np.testing.assert_allclose(np.asarray(y, dtype=float), np.asarray(x, dtype=float), rtol=1e-12, atol=1e-12)


def test_backend_lookup():
    assert kernels.backend("python") is kernels._fallback
    assert kernels.backend() is kernels._impl
    with pytest.raises(ValueError):
        kernels.backend("fortran")


@pytest.mark.parametrize("flag, expected", [("1", "python"), ("0", None)])
def test_backend_chosen_at_import(flag, expected):
    env = dict(os.environ, SWITCHOPT_PURE_PYTHON=flag)
    out = subprocess.run([sys.executable, "-c", "import switchopt; print(switchopt.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    assert out == (expected or kernels.BACKEND)


def test_solver_result_is_backend_independent():
    code = (
        "import numpy as np\n"
        "from switchopt.benchmarks import builtin\n"
        "from switchopt.problem import NormalizedGrid\n"
        "from switchopt.rollout import initial_controller\n"
        "from switchopt.slq import slq_solve\n"
        "d = builtin('ex1'); p = d.problem; g = NormalizedGrid.for_problem(p, 40)\n"
        "r = slq_solve(p, [1.0, 2.0], initial_controller(p, [1.0, 2.0], g), g)\n"
        "print(repr(r.cost), r.iterations)\n"
    )
    runs = []
    for flag in ("1", "0"):
        env = dict(os.environ, SWITCHOPT_PURE_PYTHON=flag)
        runs.append(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                                   text=True, check=True).stdout.split())
    assert runs[0][1] == runs[1][1]
    assert float(runs[0][0]) == pytest.approx(float(runs[1][0]), rel=1e-12)
