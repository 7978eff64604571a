"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise, or when
``RMABSCHED_PURE_PYTHON`` is set to a non-empty value, the numpy fallback
is used. ``BACKEND`` names the active one.
"""
from __future__ import annotations

import os

from . import _kernels_py as python_backend

compiled_backend = None
if not os.environ.get("RMABSCHED_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

if compiled_backend is not None:
    simulate_chunk = compiled_backend.simulate_chunk
    subsidy_value_iteration = compiled_backend.subsidy_value_iteration
    BACKEND = "compiled"
else:
    simulate_chunk = python_backend.simulate_chunk
    subsidy_value_iteration = python_backend.subsidy_value_iteration
    BACKEND = "python"
