"""Backend selection for the sequence kernels.

The compiled extension is used when it imports; setting
``PARAREP_PURE_PYTHON=1`` forces the pure-Python fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("PARAREP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

edit_distance = _impl.edit_distance
lcs_length = _impl.lcs_length
apply_shift = _impl.apply_shift
best_shift = _impl.best_shift
ter_greedy = _impl.ter_greedy
