"""Kernel backend selection: compiled extension if importable, else pure Python.

Set WEYLSPEC_PURE=1 to force the Python lane (used by the benchmark and
by the test suite to cover both implementations).
"""

from __future__ import annotations

import os

if os.environ.get("WEYLSPEC_PURE") == "1":
    from . import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as _impl

        BACKEND = "python"

sturm_count = _impl.sturm_count
bisect_smallest = _impl.bisect_smallest
