"""Backend selection for the membrane recurrences.

The compiled extension is used when it imports; setting
``SPIKEATTACK_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _kernels_py as python_backend

compiled_backend = None
if os.environ.get("SPIKEATTACK_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend or python_backend


def backend():
    return _active.BACKEND


def use(name):
    """Switch backend at runtime: ``"cython"`` or ``"python"``."""
    global _active
    if name == "python":
        _active = python_backend
    elif name == "cython":
        if compiled_backend is None:
            raise RuntimeError("compiled kernels are not available")
        _active = compiled_backend
    else:
        raise ValueError(f"unknown backend {name!r}")


def recur_forward(I, decay, in_scale, v_th, relax_alpha=0.0, gate=None):
    return _active.recur_forward(I, decay, in_scale, v_th, relax_alpha, gate)


def recur_backward(dS, V, S, SG, decay, in_scale, detach):
    return _active.recur_backward(dS, V, S, SG, decay, in_scale, detach)


def compiled_available():
    return compiled_backend is not None
