"""Pure-Python fallback for the compiled Sturm-sequence kernels.

Same API as ``weylspec._kernels``; plain lists beat ndarray scalar
indexing in the sequential recurrence by a wide margin, but this lane is
still two to three orders of magnitude slower than the extension (see
benchmarks/bench_kernels.py).
"""

from __future__ import annotations

import numpy as np


def _count(diag: list, off2: list, x: float, pivmin: float) -> int:
    q = diag[0] - x
    count = 1 if q < 0.0 else 0
    for i in range(1, len(diag)):
        if -pivmin < q < pivmin:
            q = -pivmin
        q = diag[i] - x - off2[i - 1] / q
        if q < 0.0:
            count += 1
    return count


def sturm_count(diag, off2, x: float, pivmin: float) -> int:
    """Number of eigenvalues of the tridiagonal matrix strictly below x."""
    return _count(list(diag), list(off2), x, pivmin)


def bisect_smallest(diag, off2, nev: int, lo: float, hi: float,
                    abs_tol: float, rel_tol: float, max_iter: int):
    """The nev smallest eigenvalues, by bisection on Sturm counts."""
    d = [float(v) for v in diag]
    e2 = [float(v) for v in off2]
    pivmin = 1e-307 * (1.0 + (max(e2) if e2 else 0.0))

    los = [lo] * nev
    his = [hi] * nev
    out = np.empty(nev, dtype=np.float64)
    for j in range(nev):
        for _ in range(max_iter):
            width = his[j] - los[j]
            mid = los[j] + 0.5 * width
            tol = abs_tol + rel_tol * abs(mid)
            if width <= tol or mid == los[j] or mid == his[j]:
                break
            cnt = _count(d, e2, mid, pivmin)
            if cnt > j:
                his[j] = mid
            else:
                los[j] = mid
            for i in range(j + 1, nev):
                if cnt > i:
                    if mid < his[i]:
                        his[i] = mid
                elif mid > los[i]:
                    los[i] = mid
        out[j] = los[j] + 0.5 * (his[j] - los[j])
    return out
