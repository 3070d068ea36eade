"""Kernel backend selection.

The compiled extension is used when it imports cleanly; setting
``MFG_GRID_PURE=1`` forces the numpy implementation.
"""
import logging
import os

log = logging.getLogger(__name__)

_backend = None
if not os.environ.get("MFG_GRID_PURE"):
    try:
        from . import _kernels as _backend
    except ImportError:  # pragma: no cover - depends on build
        log.debug("compiled kernels unavailable; using numpy fallback")
        _backend = None
if _backend is None:
    from . import _pykernels as _backend

IMPLEMENTATION = _backend.IMPLEMENTATION

lemke = _backend.lemke
bellman_hour = _backend.bellman_hour
value_iteration = _backend.value_iteration
solve_cyclic = _backend.solve_cyclic
solve_cyclic_batch = _backend.solve_cyclic_batch
select_actions = _backend.select_actions


def backends():
    """Both importable backends keyed by name (the compiled one may be absent)."""
    from . import _pykernels

    out = {"python": _pykernels}
    try:
        from . import _kernels

        out["cython"] = _kernels
    except ImportError:  # pragma: no cover
        pass
    return out
