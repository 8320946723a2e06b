"""Kernel backend selection.

The compiled extension is used when it imports; set ``QMLP_RL_PURE_PYTHON=1``
to force the numpy fallback. ``BACKEND`` names the active implementation.
"""

import os

from . import _pykernels

python_kernels = _pykernels
compiled_kernels = None

if not os.environ.get("QMLP_RL_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled_kernels
    except ImportError:  # extension not built
        compiled_kernels = None

_impl = compiled_kernels or python_kernels
BACKEND = "cython" if compiled_kernels is not None and _impl is compiled_kernels else "python"

all_finite = _impl.all_finite
adam_update = _impl.adam_update
soft_update = _impl.soft_update
