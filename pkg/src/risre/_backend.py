"""Select the compiled kernels when available, else the NumPy fallback.

Set ``RISRE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

NAME = "python"
kernels = _kernels_py

if not os.environ.get("RISRE_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        NAME = "cython"


def get(name: str | None = None):
    """Kernel module by name (``"cython"``/``"python"``), default the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
