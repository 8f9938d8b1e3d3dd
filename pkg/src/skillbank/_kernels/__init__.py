"""Hot numeric kernels with a compiled core and a numpy fallback.

The compiled extension is used when it was built and importable; set
``SKILLBANK_PURE_PYTHON=1`` to force the fallback. ``BACKEND`` names the
active implementation.
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if not os.environ.get("SKILLBANK_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

cosine_scores = _active.cosine_scores
project_points = _active.project_points
out_of_view = _active.out_of_view
longest_stationary_span = _active.longest_stationary_span
transfer_orientations = _active.transfer_orientations

__all__ = [
    "BACKEND",
    "compiled_backend",
    "python_backend",
    "cosine_scores",
    "project_points",
    "out_of_view",
    "longest_stationary_span",
    "transfer_orientations",
]
