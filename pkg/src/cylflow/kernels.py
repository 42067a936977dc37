"""Kernel backend selection.

The compiled extension is used when importable; setting
``CYLFLOW_BACKEND=python`` forces the numpy fallback.  ``derivatives_2d``
always comes from the numpy module since it is only used for diagnostics.
"""

import os

from . import _kernels_py

_requested = os.environ.get("CYLFLOW_BACKEND", "auto").lower()

_compiled = None
if _requested != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        if _requested == "compiled":
            raise

backend = _compiled if _compiled is not None else _kernels_py
BACKEND = backend.BACKEND

fill_ghosts_1d = backend.fill_ghosts_1d
operator_1d = backend.operator_1d
explicit_1d = backend.explicit_1d
fill_ghosts_2d = backend.fill_ghosts_2d
operator_2d = backend.operator_2d
explicit_2d = backend.explicit_2d
derivatives_2d = _kernels_py.derivatives_2d


def available_backends():
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out
