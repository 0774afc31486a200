"""Backend selection for the hot loops.

The compiled numba path is the default.  Setting ``CSA_SIM_DISABLE_NUMBA=1``
(or running without numba installed) selects the pure-numpy path, which
produces the same point sequences, only slower.
"""

import importlib
import os

DISABLE_ENV = "CSA_SIM_DISABLE_NUMBA"
BACKENDS = ("numba", "numpy")

_loaded = {}


def numba_available():
    try:
        importlib.import_module("numba")
    except ImportError:
        return False
    return True


def default_backend():
    if os.environ.get(DISABLE_ENV, "").strip() not in ("", "0"):
        return "numpy"
    return "numba" if numba_available() else "numpy"


def get_kernels(backend=None):
    """Return the kernel module for ``backend`` (None means the default)."""
    name = backend or default_backend()
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")
    if name == "numba" and not numba_available():
        raise ValueError("numba backend requested but numba is not installed")
    if name not in _loaded:
        _loaded[name] = importlib.import_module(f"{__name__}._{name}")
    return _loaded[name]
