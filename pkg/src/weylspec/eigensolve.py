"""Tridiagonal Sturm-sequence bisection and a reorthogonalized Lanczos solver."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import backend

__all__ = [
    "TridiagSystem",
    "SparseSymOperator",
    "LanczosError",
    "sturm_liouville_system",
    "sturm_liouville_eigs",
    "lanczos_smallest",
]

DEFAULT_LANCZOS_SEED = 20240601  # fixed so reports are reproducible


@dataclass(frozen=True)
class TridiagSystem:
    """Symmetric tridiagonal matrix (diagonal, first off-diagonal)."""

    diagonal: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diagonal, dtype=float)
        e = np.asarray(self.offdiag, dtype=float)
        if d.ndim != 1 or e.ndim != 1 or e.size != d.size - 1:
            raise ValueError("offdiag must have length dim - 1")
        object.__setattr__(self, "diagonal", d)
        object.__setattr__(self, "offdiag", e)

    @property
    def dimension(self) -> int:
        return self.diagonal.size

    def apply(self, x: np.ndarray) -> np.ndarray:
        y = self.diagonal * x
        y[:-1] += self.offdiag * x[1:]
        y[1:] += self.offdiag * x[:-1]
        return y

    def eigenvalues_smallest(self, count: int, rel_tol: float = 1e-13,
                             abs_tol: float = 1e-300) -> np.ndarray:
        if count < 1:
            raise ValueError("count must be >= 1")
        if count > self.dimension:
            raise ValueError(f"count {count} exceeds matrix dimension {self.dimension}")
        d, e = self.diagonal, self.offdiag
        rad = np.zeros_like(d)
        rad[:-1] += np.abs(e)
        rad[1:] += np.abs(e)
        lo = float(np.min(d - rad))
        hi = float(np.max(d + rad))
        pad = 1e-12 * max(1.0, abs(lo), abs(hi))
        return np.asarray(backend.bisect_smallest(
            np.ascontiguousarray(d), np.ascontiguousarray(e * e), count,
            lo - pad, hi + pad, abs_tol, rel_tol, 200))

    def to_operator(self) -> "SparseSymOperator":
        n = self.dimension
        rows = np.concatenate([np.arange(n), np.arange(n - 1)])
        cols = np.concatenate([np.arange(n), np.arange(1, n)])
        vals = np.concatenate([self.diagonal, self.offdiag])
        return SparseSymOperator.from_entries(n, rows, cols, vals)


class SparseSymOperator:
    """Symmetric operator: either explicit (row <= col) entries or a matvec."""

    def __init__(self, dimension: int, matrix: Optional[sp.csr_matrix] = None,
                 matvec: Optional[Callable] = None):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        if (matrix is None) == (matvec is None):
            raise ValueError("provide exactly one of matrix or matvec")
        self.dimension = dimension
        self._matrix = matrix
        self._matvec = matvec

    @classmethod
    def from_entries(cls, dimension, rows, cols, vals) -> "SparseSymOperator":
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        vals = np.asarray(vals, dtype=float)
        if np.any(rows > cols):
            raise ValueError("entries must satisfy row <= col")
        upper = sp.coo_matrix((vals, (rows, cols)), shape=(dimension, dimension))
        strict = sp.triu(upper, k=1)
        full = (upper + strict.T).tocsr()
        return cls(dimension, matrix=full)

    @classmethod
    def from_matvec(cls, dimension, fn: Callable) -> "SparseSymOperator":
        return cls(dimension, matvec=fn)

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix @ x
        return self._matvec(x)


def _eval(fn, x):
    out = fn(x)
    return np.asarray(out, dtype=float)


def sturm_liouville_system(p, q, w, interval, h: float,
                           bc_left: str = "dirichlet",
                           bc_right: str = "dirichlet"):
    """Symmetrized cell-centered discretization of -(p u')' + q u = lam w u.

    Fluxes use p at cell faces;  Dirichlet walls enter through ghost-cell
    reflection, 'regular' walls through a vanishing boundary flux (the
    natural condition when p -> 0 at the axis).  The generalized problem
    is reduced to an ordinary symmetric tridiagonal one via the
    similarity transform by sqrt(w), which preserves the spectrum.

    Returns (TridiagSystem, cell_centers, cell_weights).
    """
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ValueError("interval must have positive length")
    if h <= 0:
        raise ValueError("h must be positive")
    n = int(round((b - a) / h))
    if n < 2 or abs(n * h - (b - a)) > 1e-8 * (b - a):
        raise ValueError("h must divide the interval length")
    for bc in (bc_left, bc_right):
        if bc not in ("dirichlet", "regular"):
            raise ValueError("boundary conditions must be 'dirichlet' or 'regular'")

    faces = a + h * np.arange(n + 1)
    centers = a + h * (np.arange(n) + 0.5)
    pf = _eval(p, faces)
    qc = _eval(q, centers)
    wc = _eval(w, centers)
    if np.min(pf[1:-1]) <= 0.0:
        raise ValueError("weight p must be positive on the interior")
    if np.min(wc) <= 0.0:
        raise ValueError("measure w must be positive")

    diag = (pf[:-1] + pf[1:]) / h**2 + qc
    if bc_left == "dirichlet":
        diag[0] += pf[0] / h**2
    else:
        diag[0] -= pf[0] / h**2
    if bc_right == "dirichlet":
        diag[-1] += pf[-1] / h**2
    else:
        diag[-1] -= pf[-1] / h**2
    off = -pf[1:-1] / h**2

    sym_diag = diag / wc
    sym_off = off / np.sqrt(wc[:-1] * wc[1:])
    return TridiagSystem(sym_diag, sym_off), centers, wc


def sturm_liouville_eigs(p, q, w, interval, h: float, count: int,
                         bc_left: str = "dirichlet",
                         bc_right: str = "dirichlet") -> np.ndarray:
    """The count smallest Dirichlet eigenvalues of -(p u')'/w + q u/w, ascending."""
    system, _, _ = sturm_liouville_system(p, q, w, interval, h, bc_left, bc_right)
    return system.eigenvalues_smallest(count)


class LanczosError(RuntimeError):
    def __init__(self, message: str, residuals):
        super().__init__(message)
        self.residuals = residuals


def lanczos_smallest(A: SparseSymOperator, count: int, tol: float,
                     seed: int = DEFAULT_LANCZOS_SEED, which: str = "smallest",
                     max_subspace: Optional[int] = None,
                     max_restarts: int = 80):
    """Extreme eigenpairs of a symmetric operator by restarted Lanczos.

    Full reorthogonalization (two projection passes per step) keeps the
    basis orthonormal; thick restarts retain the best Ritz vectors.  The
    start vector is pseudo-random with a fixed default seed so repeated
    runs are bit-identical.  Returns [(eigenvalue, eigenvector), ...] with
    true residuals ||A v - lam v|| <= tol for unit v.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    dim = A.dimension
    if count > dim:
        raise ValueError(f"count {count} exceeds operator dimension {dim}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if which not in ("smallest", "largest"):
        raise ValueError("which must be 'smallest' or 'largest'")

    m = max_subspace or min(dim, max(2 * count + 20, 40))
    m = min(max(m, count + 2), dim)
    rng = np.random.default_rng(seed)
    V = np.zeros((dim, m))
    T = np.zeros((m, m))
    v = rng.standard_normal(dim)
    V[:, 0] = v / np.linalg.norm(v)
    start = 0
    last_res = None

    for _ in range(max_restarts):
        wvec, beta = None, 0.0
        for j in range(start, m):
            wvec = A.apply(V[:, j])
            c = V[:, :j + 1].T @ wvec
            wvec = wvec - V[:, :j + 1] @ c
            c2 = V[:, :j + 1].T @ wvec
            wvec = wvec - V[:, :j + 1] @ c2
            c += c2
            T[: j + 1, j] = c
            T[j, : j + 1] = c
            beta = float(np.linalg.norm(wvec))
            if j + 1 < m:
                if beta < 1e-14 * max(1.0, float(np.abs(T[j, j]))):
                    # invariant subspace: continue with a fresh direction
                    wvec = rng.standard_normal(dim)
                    wvec -= V[:, :j + 1] @ (V[:, :j + 1].T @ wvec)
                    wvec -= V[:, :j + 1] @ (V[:, :j + 1].T @ wvec)
                    beta = float(np.linalg.norm(wvec))
                V[:, j + 1] = wvec / beta

        theta, Z = np.linalg.eigh(T)
        idx = np.arange(count) if which == "smallest" else np.arange(m - 1, m - count - 1, -1)
        Y = V @ Z[:, idx]
        lams = theta[idx]
        res = np.array([np.linalg.norm(A.apply(Y[:, i]) - lams[i] * Y[:, i])
                        for i in range(count)])
        last_res = res
        # the achievable residual floors at round-off of the operator scale
        floor = 64.0 * np.finfo(float).eps * float(np.max(np.abs(theta)))
        if np.all(res <= max(tol, floor)):
            order = np.argsort(lams)
            return [(float(lams[i]), Y[:, i] / np.linalg.norm(Y[:, i])) for i in order]

        # thick restart: keep the wanted Ritz vectors plus a small buffer and
        # continue with the last residual direction; the kept block of T is
        # re-projected exactly so Rayleigh-Ritz stays variational
        keep = min(count + max(count, 5), m - 2)
        kidx = (np.arange(keep) if which == "smallest"
                else np.arange(m - 1, m - keep - 1, -1))
        Yk = V @ Z[:, kidx]
        AY = np.column_stack([A.apply(Yk[:, i]) for i in range(keep)])
        proj = Yk.T @ AY
        V[:, :keep] = Yk
        T[:, :] = 0.0
        T[:keep, :keep] = 0.5 * (proj + proj.T)
        if wvec is None or beta < 1e-13:
            wvec = rng.standard_normal(dim)
        wvec = wvec - V[:, :keep] @ (V[:, :keep].T @ wvec)
        wvec = wvec - V[:, :keep] @ (V[:, :keep].T @ wvec)
        nrm = float(np.linalg.norm(wvec))
        if nrm < 1e-300:
            wvec = rng.standard_normal(dim)
            wvec = wvec - V[:, :keep] @ (V[:, :keep].T @ wvec)
            nrm = float(np.linalg.norm(wvec))
        V[:, keep] = wvec / nrm
        start = keep

    raise LanczosError(
        f"Lanczos did not reach tol={tol:g} within {max_restarts} restarts; "
        f"achieved residuals {np.array2string(last_res, precision=3)}",
        residuals=last_res)
