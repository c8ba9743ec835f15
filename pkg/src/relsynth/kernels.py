"""Kernel back-end selection.

The compiled extension is used when it was built; ``RELSYNTH_PURE_PYTHON=1``
forces the pure-Python implementations.  Both expose identical functions.
"""
import os

from . import _pykernels as python_backend

try:
    if os.environ.get("RELSYNTH_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure Python requested")
    from . import _ckernels as compiled_backend
except ImportError:
    compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND_NAME = "cython" if compiled_backend is not None else "python"

sbm_sweep = backend.sbm_sweep
rewire_simple = backend.rewire_simple
gbdt_histogram = backend.gbdt_histogram
