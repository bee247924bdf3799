"""Kernel backend selection.

Prefers the compiled extension, falls back to the numpy implementation when
the extension was not built.  DENSEHAR_FORCE_NUMPY=1 forces the fallback
(used by the parity tests and the benchmark).
"""

import os

from . import kernels_numpy

if os.environ.get("DENSEHAR_FORCE_NUMPY") == "1":
    _impl = kernels_numpy
    NAME = "numpy"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]

        NAME = "cython"
    except ImportError:
        _impl = kernels_numpy
        NAME = "numpy"

conv1d_fwd = _impl.conv1d_fwd
conv1d_bwd_x = _impl.conv1d_bwd_x
conv1d_bwd_w = _impl.conv1d_bwd_w
convt1d_fwd = _impl.convt1d_fwd
convt1d_bwd_x = _impl.convt1d_bwd_x
convt1d_bwd_w = _impl.convt1d_bwd_w
maxpool1d_fwd = _impl.maxpool1d_fwd
maxpool1d_bwd = _impl.maxpool1d_bwd
