"""Kernel backend selection.

The compiled extension is used when it imports; set ``HYBRID_MANIP_PURE=1``
to force the numpy fallback (the benchmark script flips between both).
"""

from __future__ import annotations

import os

from hybrid_manip import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("HYBRID_MANIP_PURE", "") not in ("1", "true", "yes"):
    try:
        from hybrid_manip import _ckernels as _compiled
    except ImportError:
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"

gae = _impl.gae
# numpy's BLAS matvec beats the compiled loop at these layer sizes; the
# compiled version stays available for the benchmark script
mlp_forward_vec = _pykernels.mlp_forward_vec
gaussian_log_prob = _impl.gaussian_log_prob


def compiled_module():
    """The compiled kernel module, or None when it was not built."""
    try:
        from hybrid_manip import _ckernels
    except ImportError:
        return None
    return _ckernels
