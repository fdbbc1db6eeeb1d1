"""Kernel selection: the compiled extension when importable, else the numpy twin.

Set ``IONTRANSPORT_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _verlet_py

python_kernel = _verlet_py

try:
    from . import _verlet as compiled_kernel
except ImportError:  # extension not built
    compiled_kernel = None

if compiled_kernel is not None and not os.environ.get("IONTRANSPORT_PURE_PYTHON"):
    kernel = compiled_kernel
    BACKEND = "cython"
else:
    kernel = python_kernel
    BACKEND = "python"
