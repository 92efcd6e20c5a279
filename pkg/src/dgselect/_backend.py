"""Kernel backend selection.

``DGSELECT_BACKEND`` picks the implementation of the hot numeric kernels:

* ``auto`` (default) — numba if importable, else pure numpy;
* ``numba`` — require the JIT kernels, fail if numba is missing;
* ``numpy`` — force the pure-numpy fallback.

The choice is made once at import time.  Both implementations expose the same
functions and agree to within 1e-10 relative.
"""
from __future__ import annotations

import os

from .errors import ConfigurationError

ENV_VAR = "DGSELECT_BACKEND"


def _load(choice: str):
    if choice == "numpy":
        from . import _kernels_numpy

        return _kernels_numpy
    if choice == "numba":
        from . import _kernels_numba

        return _kernels_numba
    try:
        from . import _kernels_numba

        return _kernels_numba
    except ImportError:
        from . import _kernels_numpy

        return _kernels_numpy


_choice = os.environ.get(ENV_VAR, "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ConfigurationError(
        f"{ENV_VAR} must be one of 'auto', 'numba', 'numpy'; got {_choice!r}"
    )

kernels = _load(_choice)
BACKEND_NAME: str = kernels.BACKEND_NAME
