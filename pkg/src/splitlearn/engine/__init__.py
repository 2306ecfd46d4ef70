"""Propagation backends.

The compiled FFTW core is preferred when its extension module is present;
otherwise the pure-numpy implementation is used.  Both execute identical
subflow plans and agree to rounding.  SPLITLEARN_ENGINE=numpy|fftw forces
a choice (fftw raises if the extension is unavailable).
"""

import os

from .plan import (  # noqa: F401
    KINETIC,
    POTENTIAL,
    FlowDivergenceError,
    SubflowPlan,
    build_plan,
    phase_tables,
)

_requested = os.environ.get("SPLITLEARN_ENGINE", "")
if _requested not in ("", "numpy", "fftw"):
    raise ValueError(f"SPLITLEARN_ENGINE must be 'numpy' or 'fftw', got {_requested!r}")

if _requested == "numpy":
    from . import numpy_backend as _backend

    BACKEND = "numpy"
else:
    try:
        from . import fftw_backend as _backend

        BACKEND = "cython-fftw"
    except ImportError:
        if _requested == "fftw":
            raise
        from . import numpy_backend as _backend

        BACKEND = "numpy"

propagate = _backend.propagate
propagate_with_time_grad = _backend.propagate_with_time_grad
