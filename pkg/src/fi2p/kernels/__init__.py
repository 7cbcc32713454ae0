"""Hot-kernel backend selection.

Two interchangeable implementations of the inner loops exist:

* ``_numba`` -- @njit-compiled loops (default when numba imports cleanly)
* ``_numpy`` -- pure-numpy fallback, always available

``FI2P_BACKEND`` picks one explicitly: ``numba``, ``numpy``, or ``auto``
(the default). ``benchmarks/backend_bench.py`` compares the two.
"""

import os

from ..errors import ConfigError
from . import _numpy as numpy_kernels

try:
    from . import _numba as numba_kernels
except ImportError:  # pragma: no cover - numba is a hard dependency normally
    numba_kernels = None

_choice = os.environ.get("FI2P_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ConfigError(
        f"FI2P_BACKEND must be 'auto', 'numba', or 'numpy', got {_choice!r}"
    )
if _choice == "numba" and numba_kernels is None:
    raise ConfigError("FI2P_BACKEND=numba but numba is not importable")

if _choice == "numpy" or numba_kernels is None:
    _active = numpy_kernels
else:
    _active = numba_kernels

BACKEND = "numpy" if _active is numpy_kernels else "numba"

im2col_batch = _active.im2col_batch
col2im_batch = _active.col2im_batch
maxpool2_forward = _active.maxpool2_forward
maxpool2_backward = _active.maxpool2_backward
nn_brute = _active.nn_brute
kd_query_batch = _active.kd_query_batch
raster_triangles = _active.raster_triangles
fnv1a64 = _active.fnv1a64


def backend_name() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return BACKEND
