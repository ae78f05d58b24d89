"""Curvature diagnostics and hypothesis checkers.

All quantities here are ratio-type (psi_r/psi, psi_s/psi, -psi_rr/psi),
so they are computed from the log-jet of the warp and remain finite at
radii where psi itself overflows.  Finite sampling can only support or
falsify a limit statement: the "uniform limit" verdicts are operational
(slice-sup trend decreasing and below a tolerance at the last radius),
with an "inconclusive" verdict for small-but-non-monotone trends.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import ManifoldModel, eval_warp_log

__all__ = [
    "CurvatureSample",
    "HypothesisReport",
    "curvature_at",
    "check_thm1",
    "check_thm2",
    "check_kumura",
    "horoball_margin",
]


@dataclass(frozen=True)
class CurvatureSample:
    r: float
    s: float
    mean_curvature_ratio: float  # psi_r / psi
    laplacian_r: float           # (n-1) psi_r / psi
    radial_K: float              # -psi_rr / psi


@dataclass
class HypothesisReport:
    condition_id: str
    verdict: str
    observed_sup: float
    trend: list  # [(r, sup over s of the tested quantity)]
    parameters: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)  # condition -> [(r, sup)]
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if self.verdict not in ("pass", "fail", "inconclusive"):
            raise ValueError(f"invalid verdict {self.verdict!r}")
        radii = [r for r, _ in self.trend]
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError("trend radii must be strictly increasing")

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def curvature_at(model: ManifoldModel, r: float, s: float) -> CurvatureSample:
    """Mean-curvature ratio, Laplacian of r and radial sectional curvature."""
    if r < model.r_min * (1.0 - 1e-12):
        raise ValueError(f"r={r:g} below the model's r_min={model.r_min:g}")
    if abs(s) > model.s_max(r) * (1.0 + 1e-9):
        raise ValueError(f"s={s:g} outside the neighborhood at r={r:g}")
    jet = eval_warp_log(model, float(r), float(s))
    mcr = float(jet.d_r)
    return CurvatureSample(
        r=float(r), s=float(s),
        mean_curvature_ratio=mcr,
        laplacian_r=(model.n - 1) * mcr,
        radial_K=-float(jet.d_rr + jet.d_r ** 2),
    )


def _cheb_grid(hi: float, count: int) -> np.ndarray:
    """count points in [0, hi), clustered toward both 0 and hi."""
    k = np.arange(count)
    x = np.cos(np.pi * k / (count - 1))
    return (hi * (1.0 - 1e-9)) * 0.5 * (1.0 - x)


def _nonincreasing(values, slack: float) -> bool:
    return all(b <= a + slack for a, b in zip(values, values[1:]))


def _slice_jets(model: ManifoldModel, r: float, s_count: int):
    ss = _cheb_grid(float(model.s_max(r)), s_count)
    return ss, eval_warp_log(model, r * np.ones_like(ss), ss)


def _trend_verdict(sups, tol: float, notes: list) -> str:
    slack = 1e-9 * max(1.0, float(np.max(sups)))
    final_ok = sups[-1] <= tol
    if final_ok and _nonincreasing(sups, slack):
        return "pass"
    if final_ok:
        notes.append("slice-sup trend is not monotone; final value is below tolerance")
        return "inconclusive"
    notes.append(f"final slice-sup {sups[-1]:.3g} exceeds tolerance {tol:.3g}")
    return "fail"


def check_thm1(model: ManifoldModel, c: float, c1: float, r_grid,
               s_count: int = 33, tol_uniform: float = 1e-3) -> HypothesisReport:
    """Positive-rate hypotheses: psi_r/psi -> c uniformly on the shrinking
    neighborhood, and |psi_s/psi| <= c1 throughout."""
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.size == 0:
        raise ValueError("empty radial grid")
    if np.any(np.diff(r_grid) <= 0.0):
        raise ValueError("radial grid must be strictly increasing")
    if c <= 0.0:
        raise ValueError("c must be positive")
    notes = []
    if not (c > model.a > 0.0):
        notes.append(f"constant relation c > a > 0 does not hold "
                     f"(c={c:g}, a={model.a:g}); conditions checked on the data anyway")

    sup_i, sup_ii = [], []
    for r in r_grid:
        _, jets = _slice_jets(model, float(r), s_count)
        sup_i.append(float(np.max(np.abs(jets.d_r - c))))
        sup_ii.append(float(np.max(np.abs(jets.d_s))))

    verdict = _trend_verdict(sup_i, tol_uniform, notes)
    worst_ii = float(np.max(sup_ii))
    if worst_ii > c1 * (1.0 + 1e-12):
        verdict = "fail"
        notes.append(f"|psi_s/psi| reaches {worst_ii:.6g} > c1 = {c1:g}")

    return HypothesisReport(
        condition_id="thm1",
        verdict=verdict,
        observed_sup=sup_i[-1],
        trend=list(zip(r_grid.tolist(), sup_i)),
        parameters={"c": c, "c1": c1, "a": model.a, "c2": model.c2,
                    "tol_uniform": tol_uniform, "n": model.n},
        series={"i": list(zip(r_grid.tolist(), sup_i)),
                "ii": list(zip(r_grid.tolist(), sup_ii))},
        notes=notes,
    )


def check_thm2(model: ManifoldModel, c1: float, gamma: float, r_grid,
               s_count: int = 33, tol_uniform: float = 1e-3,
               growth_min: float = 10.0) -> HypothesisReport:
    """Zero-rate hypotheses on a fixed cone: psi_r/psi -> 0 and psi -> inf
    along each fixed direction, |psi_s/psi| <= c1 / r^gamma everywhere."""
    if model.a != 0.0:
        raise ValueError("the zero-rate checker requires a fixed cone (a = 0)")
    if gamma <= 1.0:
        raise ValueError("gamma must exceed 1")
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.size < 2:
        raise ValueError("need at least two radii")
    if np.any(np.diff(r_grid) <= 0.0):
        raise ValueError("radial grid must be strictly increasing")

    ss = _cheb_grid(float(model.c2), s_count)
    notes = []
    sup_i, sup_iii, log_psi = [], [], []
    for r in r_grid:
        jets = eval_warp_log(model, float(r) * np.ones_like(ss), ss)
        sup_i.append(float(np.max(np.abs(jets.d_r))))
        sup_iii.append(float(np.max(np.abs(jets.d_s))) * float(r) ** gamma)
        log_psi.append(np.asarray(jets.log_psi))

    verdict = _trend_verdict(sup_i, tol_uniform, notes)

    growth = np.min(log_psi[-1] - log_psi[0])
    if growth < np.log(growth_min):
        verdict = "fail"
        notes.append(f"psi grew only by factor {np.exp(growth):.3g} "
                     f"(needs >= {growth_min:g}) on some direction")

    worst_iii = float(np.max(sup_iii))
    if worst_iii > c1 * (1.0 + 1e-12):
        verdict = "fail"
        notes.append(f"r^gamma |psi_s/psi| reaches {worst_iii:.6g} > c1 = {c1:g}")

    return HypothesisReport(
        condition_id="thm2",
        verdict=verdict,
        observed_sup=sup_i[-1],
        trend=list(zip(r_grid.tolist(), sup_i)),
        parameters={"c1": c1, "gamma": gamma, "c2": model.c2,
                    "tol_uniform": tol_uniform, "growth_min": growth_min,
                    "n": model.n},
        series={"i": list(zip(r_grid.tolist(), sup_i)),
                "iii": list(zip(r_grid.tolist(), sup_iii))},
        notes=notes,
    )


def check_kumura(model: ManifoldModel, c: float, r_list,
                 r_cap: float = None, r_samples: int = 96,
                 s_count: int = 17, tol: float = 1e-3) -> HypothesisReport:
    """Tail criterion sup_{r >= n} |Delta r - c| -> 0, sampled on [n, r_cap]."""
    r_list = np.asarray(r_list, dtype=float)
    if r_list.size == 0:
        raise ValueError("empty r_list")
    if np.any(np.diff(r_list) <= 0.0):
        raise ValueError("r_list must be strictly increasing")
    if r_cap is None:
        r_cap = 4.0 * float(r_list[-1])

    n = model.n
    sups = []
    for start in r_list:
        rs = np.geomspace(float(start), r_cap, r_samples)
        worst = 0.0
        for r in rs:
            _, jets = _slice_jets(model, float(r), s_count)
            worst = max(worst, float(np.max(np.abs((n - 1) * jets.d_r - c))))
        sups.append(worst)

    notes = []
    verdict = _trend_verdict(sups, tol, notes)
    return HypothesisReport(
        condition_id="kumura",
        verdict=verdict,
        observed_sup=sups[-1],
        trend=list(zip(r_list.tolist(), sups)),
        parameters={"c": c, "r_cap": r_cap, "tol": tol, "n": n,
                    "a": model.a, "c2": model.c2},
        series={"tail_sup": list(zip(r_list.tolist(), sups))},
        notes=notes,
    )


def horoball_margin(r_max: float, grid_steps: int):
    """Minimum of (1 + cos s)^2 - sin(s)^2 e^r over the exponential collar
    0 < s <= exp(-r/2), 0 <= r <= r_max.

    Written via sin(s)^2 e^r = (sin(s)/s)^2 eta^2 with s = eta exp(-r/2),
    which stays finite for any r_max.
    """
    if r_max <= 0.0:
        raise ValueError("r_max must be positive")
    if grid_steps < 2:
        raise ValueError("grid_steps must be >= 2")
    r = np.linspace(0.0, r_max, grid_steps)
    eta = np.linspace(0.0, 1.0, grid_steps + 1)[1:]
    s = eta[None, :] * np.exp(-0.5 * r[:, None])
    sinc = np.sinc(s / np.pi)
    margin = (1.0 + np.cos(s)) ** 2 - (sinc * eta[None, :]) ** 2
    min_margin = float(np.min(margin))
    return min_margin > 0.0, min_margin
