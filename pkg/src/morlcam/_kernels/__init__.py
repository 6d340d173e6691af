"""Frame kernels: compiled extension when built, numpy fallback otherwise.

Set ``MORLCAM_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"

if os.environ.get("MORLCAM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels

capture = _impl.capture
measure = _impl.measure

__all__ = ["BACKEND", "capture", "measure"]
