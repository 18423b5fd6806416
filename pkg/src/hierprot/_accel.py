"""Kernel selection: compiled extension when importable, pure Python otherwise.

Set ``HIERPROT_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if os.environ.get("HIERPROT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"

contact_pairs = kernels.contact_pairs
nw_align = kernels.nw_align
