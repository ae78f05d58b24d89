"""Truncated-domain eigensolvers: the radial Sturm-Liouville reduction and
a 2-D finite-difference Laplace-Beltrami solver for surfaces.

Finite matrices cannot certify essential spectrum; these runs produce
Dirichlet eigenvalues on growing truncations whose trend against the
predicted bottom (n-1)^2 c^2 / 4 is the meaningful output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .eigensolve import SparseSymOperator, lanczos_smallest, sturm_liouville_system
from .models import ManifoldModel, eval_warp, eval_warp_log
from .weyl import estimate_rate

__all__ = ["EigenReport", "radial_eigs", "surface_eigs", "bottom_trend"]

MAX_NNZ = 4_000_000


@dataclass(frozen=True)
class EigenReport:
    R: float
    h: float
    boundary: str
    eigenvalues: tuple
    predicted_bottom: float
    model_label: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ev = tuple(float(v) for v in self.eigenvalues)
        if any(b < a for a, b in zip(ev, ev[1:])):
            raise ValueError("eigenvalues must be ascending")
        object.__setattr__(self, "eigenvalues", ev)


def _meridian_psi0(model: ManifoldModel):
    """Plain psi(0, 0) (limit value at the pole), tolerant of vanishing warps."""
    try:
        return float(eval_warp(model, 0.0, 0.0).psi)
    except ArithmeticError:
        return 0.0


def radial_eigs(model: ManifoldModel, R: float, h: float, count: int,
                r_lo: float = 0.0, bc_left: str = "auto") -> EigenReport:
    """Smallest Dirichlet eigenvalues of -(psi^{n-1} u')' / psi^{n-1} on [r_lo, R].

    The weight is evaluated in log space and rescaled by its mid-range
    value (a common constant scaling of p and w leaves the spectrum
    unchanged), so exponential warps assemble without overflow.  For
    warps vanishing at the pole the left wall is 'regular' (zero flux),
    matching smooth radial eigenfunctions; otherwise Dirichlet.
    """
    if not model.s_independent:
        raise ValueError("radial reduction needs an s-independent warp")
    if R <= r_lo:
        raise ValueError("need R > r_lo")
    n = model.n
    if bc_left == "auto":
        bc_left = "regular" if _meridian_psi0(model) < 1e-8 else "dirichlet"

    shift = (n - 1) * float(eval_warp_log(model, 0.5 * (r_lo + R), 0.0).log_psi)

    def weight(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0.0
        if np.any(pos):
            jets = eval_warp_log(model, x[pos], np.zeros_like(x[pos]))
            out[pos] = np.exp((n - 1) * np.asarray(jets.log_psi) - shift)
        if np.any(~pos):
            psi0 = _meridian_psi0(model)
            out[~pos] = psi0 ** (n - 1) * math.exp(-shift)
        return out

    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    system, _, _ = sturm_liouville_system(weight, zero, weight, (r_lo, R), h,
                                          bc_left=bc_left, bc_right="dirichlet")
    eigs = system.eigenvalues_smallest(count)

    c_est = max(0.0, 2.0 * float(eval_warp_log(model, R, 0.0).d_r)
                - float(eval_warp_log(model, 0.5 * R + 0.5 * r_lo, 0.0).d_r))
    return EigenReport(
        R=float(R), h=float(h),
        boundary=f"{bc_left}@{r_lo:g},dirichlet@{R:g}",
        eigenvalues=tuple(float(v) for v in eigs),
        predicted_bottom=(n - 1) ** 2 * c_est ** 2 / 4.0,
        model_label=model.label,
        meta={"n": n, "count": count, "r_lo": r_lo},
    )


def surface_eigs(model: ManifoldModel, R: float, h_r: float, h_theta: float,
                 theta_max: float, count: int,
                 r_lo: Optional[float] = None) -> EigenReport:
    """Dirichlet eigenvalues of the surface Laplacian on [r_lo, R] x [-theta_max, theta_max].

    Five-point divergence-form stencil with flux coefficients psi at
    radial midfaces and 1/psi at angular midfaces, weight psi, then the
    sqrt(weight) similarity transform; smallest eigenvalues extracted by
    the Lanczos engine applied to the factorized inverse.
    """
    if model.n != 2:
        raise ValueError("the surface solver is for n = 2")
    if r_lo is None:
        r_lo = model.r_min
    if R <= r_lo or theta_max <= 0.0:
        raise ValueError("need R > r_lo and theta_max > 0")

    nr = int(round((R - r_lo) / h_r))
    nt = int(round(2.0 * theta_max / h_theta))
    if nr < 3 or abs(nr * h_r - (R - r_lo)) > 1e-8 * (R - r_lo):
        raise ValueError("h_r must divide R - r_lo")
    if nt < 3 or abs(nt * h_theta - 2.0 * theta_max) > 1e-8 * theta_max:
        raise ValueError("h_theta must divide 2 theta_max")
    dim = nr * nt
    nnz = 5 * dim
    if nnz > MAX_NNZ:
        scale = math.sqrt(nnz / MAX_NNZ)
        raise ValueError(
            f"mesh needs ~{nnz} nonzeros (cap {MAX_NNZ}); try h_r >= {h_r * scale:.3g} "
            f"and h_theta >= {h_theta * scale:.3g}")

    rf = r_lo + h_r * np.arange(nr + 1)          # radial faces
    rc = r_lo + h_r * (np.arange(nr) + 0.5)      # radial centers
    tf = -theta_max + h_theta * np.arange(nt + 1)
    tc = -theta_max + h_theta * (np.arange(nt) + 0.5)

    def psi_at(rr, tt):
        jets = eval_warp_log(model, rr, tt)
        lp = np.asarray(jets.log_psi)
        if np.max(lp) > 690.0:
            raise ValueError("warp exceeds float range on this domain; reduce R")
        return np.exp(lp)

    psi_rfaces = psi_at(np.repeat(rf, nt), np.tile(tc, nr + 1)).reshape(nr + 1, nt)
    psi_tfaces = psi_at(np.repeat(rc, nt + 1), np.tile(tf, nr)).reshape(nr, nt + 1)
    psi_c = psi_at(np.repeat(rc, nt), np.tile(tc, nr)).reshape(nr, nt)

    cr = psi_rfaces / h_r ** 2           # radial flux coefficients
    ct = (1.0 / psi_tfaces) / h_theta ** 2

    idx = np.arange(dim).reshape(nr, nt)
    rows, cols, vals = [], [], []

    diag = cr[:-1, :] + cr[1:, :] + ct[:, :-1] + ct[:, 1:]
    # Dirichlet walls by ghost reflection: double the wall-face coefficient
    diag[0, :] += cr[0, :]
    diag[-1, :] += cr[-1, :]
    diag[:, 0] += ct[:, 0]
    diag[:, -1] += ct[:, -1]
    rows.append(idx.ravel()); cols.append(idx.ravel()); vals.append(diag.ravel())

    rows.append(idx[:-1, :].ravel()); cols.append(idx[1:, :].ravel())
    vals.append(-cr[1:-1, :].ravel())
    rows.append(idx[:, :-1].ravel()); cols.append(idx[:, 1:].ravel())
    vals.append(-ct[:, 1:-1].ravel())

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    swap = rows > cols
    rows[swap], cols[swap] = cols[swap], rows[swap]

    upper = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim))
    strict = sp.triu(upper, k=1)
    A = (upper + strict.T).tocsr()

    d = 1.0 / np.sqrt(psi_c.ravel())
    D = sp.diags(d)
    A_sym = (D @ A @ D).tocsc()

    lu = spla.splu(A_sym)
    inverse = SparseSymOperator.from_matvec(dim, lu.solve)
    pairs = lanczos_smallest(inverse, count, tol=1e-9, which="largest")
    eigs = sorted(1.0 / mu for mu, _ in pairs)

    c_est = estimate_rate(model)
    return EigenReport(
        R=float(R), h=float(h_r),
        boundary="dirichlet(all edges)",
        eigenvalues=tuple(eigs),
        predicted_bottom=(model.n - 1) ** 2 * c_est ** 2 / 4.0,
        model_label=model.label,
        meta={"h_theta": h_theta, "theta_max": theta_max, "count": count,
              "r_lo": r_lo, "dim": dim},
    )


def bottom_trend(reports):
    """(extrapolated bottom, monotone flag) from lambda_1 against 1/R^2.

    Fits lambda_1(R) = lam_inf + C / R^2 by least squares over at least
    three reports on increasing truncation radii of one model.
    """
    reports = list(reports)
    if len(reports) < 3:
        raise ValueError("bottom_trend needs at least three reports")
    labels = {rep.model_label for rep in reports}
    if len(labels) != 1:
        raise ValueError("reports must share one model")
    radii = np.array([rep.R for rep in reports])
    if np.any(np.diff(radii) <= 0.0):
        raise ValueError("reports must have increasing R")
    lam1 = np.array([rep.eigenvalues[0] for rep in reports])
    design = np.column_stack([np.ones_like(radii), 1.0 / radii ** 2])
    coef, *_ = np.linalg.lstsq(design, lam1, rcond=None)
    monotone = bool(np.all(np.diff(lam1) <= 1e-12 * np.maximum(1.0, np.abs(lam1[:-1]))))
    return float(coef[0]), monotone
