"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy fallback in ``_pykernels``. Set ``COVNOISE_BACKEND=python`` to force the
fallback (``cython`` to require the extension).
"""

import os

from . import _pykernels

_requested = os.environ.get("COVNOISE_BACKEND", "").strip().lower()

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if _requested == "python":
    kernels = _pykernels
elif _requested == "cython":
    if _compiled is None:
        raise ImportError("COVNOISE_BACKEND=cython but covnoise._kernels is not built")
    kernels = _compiled
elif _requested in ("", "auto"):
    kernels = _compiled if _compiled is not None else _pykernels
else:
    raise ImportError(f"unknown COVNOISE_BACKEND {_requested!r}")

BACKEND = kernels.BACKEND_NAME


def available():
    """Names of the backends importable in this environment."""
    return ["python"] + (["cython"] if _compiled is not None else [])


def get(name=None):
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython" and _compiled is not None:
        return _compiled
    raise ValueError(f"backend {name!r} not available")
