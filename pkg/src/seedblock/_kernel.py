"""Selects the XOR kernel at import time.

The compiled ``_xorcore`` extension is preferred; set ``SEEDBLOCK_PURE=1`` to
force the pure-Python fallback.
"""

import os

from . import _xorpy

if os.environ.get("SEEDBLOCK_PURE"):
    xor_tile = _xorpy.xor_tile
    BACKEND = "python"
else:
    try:
        from ._xorcore import xor_tile as _compiled
    except ImportError:
        xor_tile = _xorpy.xor_tile
        BACKEND = "python"
    else:
        def xor_tile(data, key):
            # memoryviews need the buffer protocol; normalise str/list early
            if not isinstance(data, (bytes, bytearray, memoryview)):
                data = bytes(data)
            if not isinstance(key, (bytes, bytearray, memoryview)):
                key = bytes(key)
            return _compiled(data, key)
        BACKEND = "cython"

KERNELS = {"python": _xorpy.xor_tile}
try:
    from ._xorcore import xor_tile as _c
    KERNELS["cython"] = _c
except ImportError:
    pass
