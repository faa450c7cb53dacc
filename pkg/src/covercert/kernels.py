"""Backend selection for the hot kernels.

The compiled extension is used when importable; setting the environment
variable ``COVERCERT_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from covercert import _pykernels

if os.environ.get("COVERCERT_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from covercert import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

jacobi_eigh = _impl.jacobi_eigh
eigvalsh_batch = _impl.eigvalsh_batch
walk_slots = _impl.walk_slots

__all__ = ["BACKEND", "jacobi_eigh", "eigvalsh_batch", "walk_slots"]
