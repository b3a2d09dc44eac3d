"""Kernel selection: compiled extension when importable, else pure Python.

Set ``MSOT_BACKEND=python`` to force the fallback.
"""

import os

from . import _simplex_py

try:
    from . import _simplex_ext
except ImportError:  # extension not built
    _simplex_ext = None

BACKENDS = {"python": _simplex_py}
if _simplex_ext is not None:
    BACKENDS["cython"] = _simplex_ext

_requested = os.environ.get("MSOT_BACKEND", "").lower()
if _requested in BACKENDS:
    DEFAULT = _requested
else:
    DEFAULT = "cython" if _simplex_ext is not None else "python"


def get_kernel(name=None):
    """Return the ``network_simplex`` callable of the named backend."""
    name = DEFAULT if name is None else name
    try:
        return BACKENDS[name].network_simplex
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}; "
                         f"have {sorted(BACKENDS)}") from None
