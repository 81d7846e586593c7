"""Select the sweep kernel at import time.

The compiled extension is preferred; set ``RCBAYES_PURE_PYTHON=1`` to force
the interpreted fallback.
"""

import os
import types

from . import _sweep_py

python_kernel = types.SimpleNamespace(sweep=_sweep_py.sweep, COMPILED=False,
                                      name="python")

try:
    from . import _sweep as _compiled
except ImportError:  # extension not built
    compiled_kernel = None
else:
    compiled_kernel = types.SimpleNamespace(sweep=_compiled.sweep, COMPILED=True,
                                            name="cython")

if compiled_kernel is not None and not os.environ.get("RCBAYES_PURE_PYTHON"):
    kernel = compiled_kernel
else:
    kernel = python_kernel

BACKEND = kernel.name
