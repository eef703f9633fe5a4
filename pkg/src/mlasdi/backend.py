"""Kernel backend selection.

The compiled extension ``mlasdi._kernels_cy`` is preferred when it imported
cleanly; otherwise the numpy fallback is used.  The choice can be forced
with the environment variable ``MLASDI_BACKEND`` in {auto, cython, numpy},
or switched at runtime with :func:`use` (useful for benchmarks and tests).

Consumers access kernels late-bound, e.g.::

    from mlasdi import backend
    y = backend.kernels.linear_forward(x, w, b)

Determinism is guaranteed within a backend, not across backends.
"""

import logging
import os

from . import _kernels_py

log = logging.getLogger("mlasdi.backend")

kernels = _kernels_py


def _load(name):
    if name == "numpy":
        return _kernels_py
    if name == "cython":
        from . import _kernels_cy

        return _kernels_cy
    raise ValueError(f"unknown backend {name!r}; expected 'cython' or 'numpy'")


def use(name):
    """Switch the active kernel backend; returns the active backend name."""
    global kernels
    kernels = _load(name)
    return kernels.BACKEND_NAME


def active_name():
    """Name of the currently selected backend ('cython' or 'numpy')."""
    return kernels.BACKEND_NAME


def _select_initial():
    forced = os.environ.get("MLASDI_BACKEND", "auto").strip().lower()
    if forced in ("", "auto"):
        try:
            use("cython")
        except ImportError:
            log.debug("compiled kernels unavailable, using numpy fallback")
            use("numpy")
    else:
        use(forced)


_select_initial()
