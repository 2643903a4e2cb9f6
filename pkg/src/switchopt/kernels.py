"""Backend selection for the sequential sweeps.

The compiled extension is used when it imports; otherwise the numpy
fallback is. Set ``SWITCHOPT_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fallback

try:
    if os.environ.get("SWITCHOPT_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_impl = _compiled if _compiled is not None else _fallback
BACKEND = "cython" if _compiled is not None else "python"


def backend(name=None):
    """Return the kernel module for ``name`` ("cython" or "python"); default is the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def riccati_sweep(*args):
    return _impl.riccati_sweep(*args)


def sens_forward_sweep(*args):
    return _impl.sens_forward_sweep(*args)


def sens_backward_sweep(*args):
    return _impl.sens_backward_sweep(*args)
