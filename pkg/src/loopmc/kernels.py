"""Backend selection for the Monte Carlo kernels.

The compiled extension is used when it imports; otherwise the pure-Python
twins are used. Set ``LOOPMC_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

python_backend = _pykernels

if os.environ.get("LOOPMC_BACKEND", "").lower() == "python":
    compiled_backend = None
else:
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

worm_batch = active.worm_batch
loop_chain = active.loop_chain
gibbs_ais = active.gibbs_ais
