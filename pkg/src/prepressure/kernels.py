"""Kernel selection: compiled extension when importable, else pure Python.

Set ``PREPRESSURE_PURE=1`` to force the fallback.
"""

import os

from . import _kernels_py as pure

compiled = None
if os.environ.get("PREPRESSURE_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled = None

HAVE_COMPILED = compiled is not None
_impl = compiled if HAVE_COMPILED else pure

lse_chain = _impl.lse_chain
mwis_bitmask = _impl.mwis_bitmask


def backend_name() -> str:
    return "compiled" if HAVE_COMPILED else "pure"
