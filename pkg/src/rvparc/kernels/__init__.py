"""Backend dispatch for the hot kernels.

The compiled (numba) path is the default when numba imports cleanly.
Set ``RVPARC_BACKEND=numpy`` to force the pure-numpy fallback, or
``RVPARC_BACKEND=numba`` to make a missing numba an error instead of a
silent downgrade. Both implementations are interchangeable; the test
suite compares them on identical inputs.
"""

from __future__ import annotations

import os

from . import numpy_impl

_requested = os.environ.get("RVPARC_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ImportError(
        f"RVPARC_BACKEND={_requested!r} not recognized (use 'numba' or 'numpy')"
    )

if _requested == "numpy":
    _impl = numpy_impl
    BACKEND = "numpy"
else:
    try:
        from . import numba_impl as _impl

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        _impl = numpy_impl
        BACKEND = "numpy"

energy_grad = _impl.energy_grad
winding_numbers = _impl.winding_numbers
point_surface_distance = _impl.point_surface_distance


def get_impl(name):
    """Fetch a named backend module explicitly (for benchmarks/tests)."""
    if name == "numpy":
        return numpy_impl
    if name == "numba":
        from . import numba_impl

        return numba_impl
    raise ValueError(f"unknown backend '{name}'")
