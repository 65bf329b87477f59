"""Kernel backend selection.

The compiled extension is used when importable; ``ARTFIELD_PURE_PYTHON=1``
forces the numpy fallback.
"""

from __future__ import annotations

import logging
import os

logger = logging.getLogger(__name__)

if os.environ.get("ARTFIELD_PURE_PYTHON", "") not in ("", "0"):
    from . import _pykernels as _impl
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _pykernels as _impl
        BACKEND = "python"
        logger.info("compiled kernels unavailable; using numpy fallback")

rasterize = _impl.rasterize
splat_labels = _impl.splat_labels
radius_mean = _impl.radius_mean
frame_terms = _impl.frame_terms
