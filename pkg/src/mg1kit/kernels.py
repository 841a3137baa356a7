"""Kernel dispatch: compiled extension when importable, numpy fallback otherwise.

Set ``MG1KIT_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("MG1KIT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"

gth = _impl.gth
horner_right = _impl.horner_right
ramaswami = _impl.ramaswami
simulate_queue = _impl.simulate_queue

__all__ = ["BACKEND", "gth", "horner_right", "ramaswami", "simulate_queue"]
