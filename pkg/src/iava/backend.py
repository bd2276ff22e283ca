"""Kernel backend selection.

The numeric kernels exist twice: a compiled Cython extension
(iava._kernels_c) and a numpy fallback (iava._kernels_py).  The
IAVA_KERNELS environment variable picks one at import time:

* ``auto`` (default) -- compiled if importable, else numpy
* ``c``              -- compiled, ImportError if unavailable
* ``py``             -- numpy
"""

from __future__ import annotations

import logging
import os

from iava import _kernels_py

logger = logging.getLogger(__name__)

_CHOICES = ("auto", "c", "py")


def load_kernels(choice: str):
    """Return the kernel module for an explicit backend choice."""
    if choice not in _CHOICES:
        raise ValueError(f"IAVA_KERNELS must be one of {_CHOICES}, not {choice!r}")
    if choice == "py":
        return _kernels_py
    try:
        from iava import _kernels_c
    except ImportError:
        if choice == "c":
            raise
        logger.debug("compiled kernels unavailable, falling back to numpy")
        return _kernels_py
    return _kernels_c


kernels = load_kernels(os.environ.get("IAVA_KERNELS", "auto"))
BACKEND = kernels.BACKEND
