"""Pick the compiled kernels when importable, else the numpy fallback.

Set ``PRIMAPPROX_BACKEND=python`` to force the fallback.
"""
import os

from . import _pykernels

if os.environ.get("PRIMAPPROX_BACKEND", "").lower() == "python":
    kernels = _pykernels
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _pykernels

BACKEND = kernels.NAME
