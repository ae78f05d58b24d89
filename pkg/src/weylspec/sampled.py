"""Tabulated functions on a strictly increasing grid."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = ["SampledFunction"]


class SampledFunction:
    """Grid samples plus a linear or cubic interpolant.

    Evaluation reproduces the stored values exactly at grid points and is
    only defined inside [grid[0], grid[-1]].
    """

    def __init__(self, grid, values, order: str = "cubic"):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must be 1-D with at least two points")
        if grid.shape != values.shape:
            raise ValueError("grid and values must have the same length")
        if np.any(np.diff(grid) <= 0.0):
            raise ValueError("grid must be strictly increasing")
        if order not in ("linear", "cubic"):
            raise ValueError("interpolation order must be 'linear' or 'cubic'")
        self.grid = grid
        self.values = values
        self.order = order
        self._spline = CubicSpline(grid, values) if order == "cubic" else None

    def _check_range(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.grid[0], self.grid[-1]
        slack = 1e-12 * max(1.0, abs(lo), abs(hi))
        if np.any(x < lo - slack) or np.any(x > hi + slack):
            raise ValueError(
                f"evaluation outside the sampled range [{lo:.6g}, {hi:.6g}]")
        return np.clip(x, lo, hi)

    def __call__(self, x):
        xs = self._check_range(x)
        if self.order == "cubic":
            out = self._spline(xs)
        else:
            out = np.interp(xs, self.grid, self.values)
        return float(out) if np.ndim(x) == 0 else out

    def derivative(self, x, nu: int = 1):
        """Derivative of the interpolant; nu=2 needs cubic order."""
        xs = self._check_range(x)
        if self.order == "cubic":
            out = self._spline(xs, nu=nu)
        elif nu == 1:
            idx = np.clip(np.searchsorted(self.grid, xs, side="right") - 1,
                          0, self.grid.size - 2)
            out = (self.values[idx + 1] - self.values[idx]) / (self.grid[idx + 1] - self.grid[idx])
        else:
            out = np.zeros_like(xs)
        return float(out) if np.ndim(x) == 0 else out

    def __repr__(self):
        return (f"SampledFunction(n={self.grid.size}, "
                f"range=[{self.grid[0]:.6g}, {self.grid[-1]:.6g}], order={self.order!r})")
